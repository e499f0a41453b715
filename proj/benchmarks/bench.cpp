#include <random>

#include <benchmark/benchmark.h>

#include "dolphin/metrics.hpp"
#include "dolphin/model.hpp"
#include "dolphin/pipeline.hpp"

using namespace dolphin;

namespace {

std::string random_text(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::string s(n, 'a');
  for (auto& c : s) c = char('a' + rng() % 26);
  return s;
}

PageImage random_frame(int size, uint64_t seed) {
  PageImage img(size, size, 1);
  std::mt19937_64 rng(seed);
  for (auto& p : img.data) p = uint8_t(rng() % 256);
  return img;
}

Model desk_model() {
  ModelConfig cfg = ModelConfig::desk();
  cfg.seed = 1;
  cfg.vocab_size = 0;
  return Model(cfg, Vocabulary::builtin());
}

void BM_EditDistance(benchmark::State& state) {
  const auto n = size_t(state.range(0));
  const std::string a = random_text(n, 1), b = random_text(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(edit_distance(a, b).raw);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EditDistance)->Range(16, 1024)->Complexity(benchmark::oNSquared);

void BM_TableSimilarity(benchmark::State& state) {
  std::string html = "<table>";
  for (int r = 0; r < int(state.range(0)); ++r) {
    html += "<tr>";
    for (int c = 0; c < 4; ++c) html += "<td>" + random_text(3, uint64_t(r * 4 + c)) + "</td>";
    html += "</tr>";
  }
  html += "</table>";
  const std::string other = html.substr(0, html.size() - 13) + "</tr></table>";
  for (auto _ : state) benchmark::DoNotOptimize(teds(html, other));
}
BENCHMARK(BM_TableSimilarity)->Range(2, 16);

void BM_EncoderForward(benchmark::State& state) {
  const Model m = desk_model();
  const PageImage frame = random_frame(m.config().frame_size, 3);
  for (auto _ : state) benchmark::DoNotOptimize(m.encode(frame).features);
}
BENCHMARK(BM_EncoderForward)->Unit(benchmark::kMillisecond);

void BM_GenerateBatch(benchmark::State& state) {
  const Model m = desk_model();
  const int n = int(state.range(0));
  std::vector<VisualFeatures> mems;
  for (int i = 0; i < n; ++i)
    mems.push_back(m.encode(random_frame(m.config().frame_size, uint64_t(10 + i))));
  std::vector<const VisualFeatures*> ptrs;
  std::vector<Prompt> prompts(size_t(n), Prompt::paragraph());
  for (const auto& f : mems) ptrs.push_back(&f);
  for (auto _ : state) benchmark::DoNotOptimize(m.generate_batch(ptrs, prompts, 96));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_GenerateBatch)->Arg(1)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  Model m = desk_model();
  std::vector<TrainSample> batch;
  for (uint64_t i = 0; i < 2; ++i) {
    TrainSample s;
    s.frame = random_frame(m.config().frame_size, i);
    s.ids = m.build_sequence(Prompt::paragraph(), random_text(32, i), &s.sep_pos);
    batch.push_back(std::move(s));
  }
  OptimizerConfig opt;
  OptimizerState st;
  for (auto _ : state) benchmark::DoNotOptimize(m.train_step(batch, opt, st));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
