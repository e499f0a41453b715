#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "dolphin/model.hpp"
#include "dolphin/synthdoc.hpp"

using namespace dolphin;
namespace fs = std::filesystem;

namespace {

PageImage random_frame(int size, uint64_t seed) {
  PageImage img(size, size, 1);
  std::mt19937_64 rng(seed);
  for (auto& p : img.data) p = uint8_t(rng() % 256);
  return img;
}

Model make_micro(uint64_t seed) {
  ModelConfig cfg = ModelConfig::micro();
  cfg.seed = seed;
  std::vector<std::string> toks = {"[BOS]", "[EOS]", "[PAD]", "[SEP]"};
  while (int(toks.size()) < cfg.vocab_size) toks.push_back(std::string(1, char('a' + toks.size() - 4)));
  return Model(cfg, Vocabulary::from_tokens(toks));
}

TrainSample make_sample(const Model& m, uint64_t seed, int resp_len) {
  const auto& cfg = m.config();
  TrainSample s;
  s.frame = random_frame(cfg.frame_size, seed);
  std::mt19937_64 rng(seed * 31 + 7);
  s.ids = {kBos};
  for (int i = 0; i < 3; ++i) s.ids.push_back(TokenId(4 + rng() % uint64_t(cfg.vocab_size - 4)));
  s.sep_pos = int(s.ids.size());
  s.ids.push_back(kSep);
  for (int i = 0; i < resp_len; ++i) s.ids.push_back(TokenId(4 + rng() % uint64_t(cfg.vocab_size - 4)));
  s.ids.push_back(kEos);
  return s;
}

bool same_mat(const nn::MatF& a, const nn::MatF& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.array() == b.array()).all();
}

}  // namespace

TEST_CASE("config profiles validate and serialize") {
  for (ModelConfig cfg : {ModelConfig::desk(), ModelConfig::micro(), ModelConfig::paper()}) {
    cfg.vocab_size = 640;
    CHECK_NOTHROW(cfg.validate());
    CHECK(ModelConfig::from_json(cfg.to_json()) == cfg);
  }
  ModelConfig d = ModelConfig::desk();
  CHECK(d.frame_size == 256);
  CHECK(d.n_memory_tokens() == 32 * 32);
  CHECK(d.final_dim() == 64);

  ModelConfig bad = ModelConfig::desk();
  bad.vocab_size = 640;
  bad.frame_size = 250;  // not divisible by patch grid and windows
  CHECK_THROWS_AS(bad.validate(), InvalidModelConfig);
  bad = ModelConfig::desk();
  bad.vocab_size = 640;
  bad.stage_heads = {2};  // one entry per stage required
  CHECK_THROWS_AS(bad.validate(), InvalidModelConfig);
  bad = ModelConfig::desk();
  bad.vocab_size = 640;
  bad.embed_dim = 3;  // must split across heads
  CHECK_THROWS_AS(bad.validate(), InvalidModelConfig);
  bad = ModelConfig::desk();
  bad.vocab_size = -1;
  CHECK_THROWS_AS(bad.validate(), InvalidModelConfig);
  // a usable vocabulary needs the four specials plus at least one token
  CHECK_THROWS_AS(
      Model(ModelConfig::micro(),
            Vocabulary::from_tokens({"[BOS]", "[EOS]", "[PAD]", "[SEP]"})),
      InvalidModelConfig);
}

TEST_CASE("encoder output has the documented shape and is deterministic") {
  Model m = make_micro(1);
  const auto& cfg = m.config();
  const PageImage frame = random_frame(cfg.frame_size, 5);
  const VisualFeatures f1 = m.encode(frame);
  CHECK(f1.features.rows() == cfg.final_dim());
  CHECK(f1.features.cols() == cfg.n_memory_tokens());
  CHECK(f1.features.allFinite());
  const VisualFeatures f2 = m.encode(frame);
  CHECK(same_mat(f1.features, f2.features));
  PageImage wrong(cfg.frame_size / 2, cfg.frame_size, 1);
  CHECK_THROWS_AS(m.encode(wrong), ShapeMismatch);
}

TEST_CASE("identical seeds give identical parameters, different seeds differ") {
  ModelConfig cfg = ModelConfig::micro();
  cfg.vocab_size = 24;
  cfg.seed = 9;
  const Params<float> a = init_params(cfg);
  const Params<float> b = init_params(cfg);
  cfg.seed = 10;
  const Params<float> c = init_params(cfg);
  REQUIRE(a.size() == b.size());
  bool any_diff = false;
  for (const auto& [name, mat] : a) {
    CHECK(same_mat(mat, b.at(name)));
    if (!same_mat(mat, c.at(name))) any_diff = true;
    if (name.ends_with(".g")) CHECK(mat.isOnes());      // layernorm gains
    if (name.ends_with(".b")) CHECK(mat.isZero());      // biases
  }
  CHECK(any_diff);
}

TEST_CASE("checkpoint round trip is exact") {
  const fs::path path = fs::temp_directory_path() / "dolphin_ckpt_test.bin";
  Model m = make_micro(3);
  m.save(path.string());
  const Model back = Model::load(path.string());
  CHECK(back.config() == m.config());
  CHECK(back.vocab().size() == m.vocab().size());
  REQUIRE(back.params().size() == m.params().size());
  for (const auto& [name, mat] : m.params()) CHECK(same_mat(mat, back.params().at(name)));

  // saving the reloaded model reproduces the file byte for byte
  const fs::path path2 = fs::temp_directory_path() / "dolphin_ckpt_test2.bin";
  back.save(path2.string());
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string ca((std::istreambuf_iterator<char>(a)), {});
  std::string cb((std::istreambuf_iterator<char>(b)), {});
  CHECK(ca == cb);
  CHECK(!ca.empty());
  CHECK(ca.substr(0, 8) == "DOLCK001");

  // corrupting the magic is rejected
  ca[0] = 'X';
  std::ofstream(path, std::ios::binary) << ca;
  CHECK_THROWS_AS(Model::load(path.string()), CheckpointError);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("analytic gradients agree with finite differences") {
  const GradCheckResult r = finite_difference_check(ModelConfig::micro(), 11);
  CHECK(r.n_checked > 100);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("the gradient check detects a corrupted gradient") {
  const GradCheckResult r = finite_difference_check(ModelConfig::micro(), 11, 3.0);
  CHECK(r.max_rel_error > 1e-2);
}

TEST_CASE("teacher-forced logits reproduce greedy decoding") {
  // An untrained model can emit special tokens mid-stream; those are dropped
  // from the result and would desynchronize a text-based replay. Pick a seed
  // whose generation is special-free: truncated with one surviving token per
  // decode step (prefix is BOS + 2 prompt tokens + SEP = 4).
  const int cap = 16;
  std::optional<uint64_t> chosen;
  PageImage frame(1, 1, 1);
  GenResult g;
  Prompt p;
  p.kind = PromptKind::Paragraph;
  p.text = "ab";
  for (uint64_t seed = 0; seed < 64 && !chosen; ++seed) {
    Model m = make_micro(seed);
    frame = random_frame(m.config().frame_size, 21);
    g = m.generate(p, m.encode(frame), cap);
    if (g.truncated && int(g.ids.size()) == cap - 4) chosen = seed;
  }
  REQUIRE(chosen.has_value());
  Model m = make_micro(*chosen);

  // replay the generated response through the training-graph forward pass
  TrainSample s;
  s.frame = frame;
  s.ids = m.build_sequence(p, g.text, &s.sep_pos);
  const nn::MatF logits = m.forced_logits(s);
  const bool row_count_ok =
      logits.rows() == int(s.ids.size()) - 1 || logits.rows() == int(s.ids.size());
  REQUIRE(row_count_ok);
  int mismatches = 0;
  // stop before the trailing EOS: generation was truncated, so the model
  // never chose it
  for (int pos = s.sep_pos; pos + 2 < int(s.ids.size()); ++pos) {
    int argmax = 0;
    for (int v = 1; v < logits.cols(); ++v)
      if (logits(pos, v) > logits(pos, argmax)) argmax = v;
    mismatches += (argmax != s.ids[size_t(pos) + 1]);
  }
  CHECK(mismatches == 0);
}

TEST_CASE("batched generation is bitwise identical to one-at-a-time") {
  Model m = make_micro(13);
  std::vector<PageImage> frames;
  std::vector<VisualFeatures> mems;
  for (uint64_t i = 0; i < 5; ++i) {
    frames.push_back(random_frame(m.config().frame_size, 100 + i));
    mems.push_back(m.encode(frames.back()));
  }
  std::vector<const VisualFeatures*> ptrs;
  std::vector<Prompt> prompts;
  for (size_t i = 0; i < mems.size(); ++i) {
    ptrs.push_back(&mems[i]);
    Prompt p;
    p.kind = PromptKind::Paragraph;
    p.text = std::string(1, char('a' + i));
    prompts.push_back(p);
  }
  const auto batched = m.generate_batch(ptrs, prompts, 32);
  REQUIRE(batched.size() == 5);
  for (size_t i = 0; i < 5; ++i) {
    const GenResult single = m.generate(prompts[i], mems[i], 32);
    CHECK(single.ids == batched[i].ids);
    CHECK(single.text == batched[i].text);
    CHECK(single.truncated == batched[i].truncated);
  }
}

TEST_CASE("generation respects the length cap and reports truncation") {
  Model m = make_micro(17);
  const VisualFeatures mem = m.encode(random_frame(m.config().frame_size, 2));
  Prompt p;
  p.kind = PromptKind::Paragraph;
  p.text = "a";
  const GenResult g = m.generate(p, mem, 6);
  CHECK(int(g.ids.size()) <= 6);
  if (g.truncated) CHECK(!g.ids.empty());
}

TEST_CASE("build_sequence layout and padding semantics") {
  Model m = make_micro(19);
  Prompt p;
  p.kind = PromptKind::Paragraph;
  p.text = "ab";
  int sep = -1;
  const auto ids = m.build_sequence(p, "ba", &sep);
  REQUIRE(sep > 0);
  CHECK(ids.front() == kBos);
  CHECK(ids[size_t(sep)] == kSep);
  CHECK(ids.back() == kEos);
  // prompt tokens sit strictly between BOS and SEP
  for (int i = 1; i < sep; ++i) CHECK(ids[size_t(i)] >= 4);

  // trailing PAD targets contribute nothing to the loss
  TrainSample s;
  s.frame = random_frame(m.config().frame_size, 77);
  s.ids = ids;
  s.sep_pos = sep;
  const float base = m.eval_loss({s});
  TrainSample padded = s;
  padded.ids.push_back(kPad);
  padded.ids.push_back(kPad);
  const float with_pads = m.eval_loss({padded});
  CHECK(with_pads == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("training reduces the loss and can overfit a small batch") {
  Model m = make_micro(23);
  std::vector<TrainSample> batch;
  for (uint64_t i = 0; i < 4; ++i) batch.push_back(make_sample(m, i, 8));
  OptimizerConfig opt;
  opt.lr = 3e-3f;
  OptimizerState state;
  const float before = m.eval_loss(batch);
  float last = before;
  for (int step = 0; step < 60; ++step) last = m.train_step(batch, opt, state);
  const float after = m.eval_loss(batch);
  CHECK(after < before * 0.5f);
  CHECK(state.step == 60);
  CHECK(std::isfinite(last));
}

TEST_CASE("non-finite losses are reported, not silently propagated") {
  Model m = make_micro(29);
  m.params().begin()->second.setConstant(1e30f);
  std::vector<TrainSample> batch = {make_sample(m, 1, 6)};
  OptimizerConfig opt;
  OptimizerState state;
  CHECK_THROWS_AS(m.train_step(batch, opt, state), NonFiniteLoss);
}

TEST_CASE("sequences beyond max_seq_len are rejected") {
  Model m = make_micro(31);
  TrainSample s = make_sample(m, 3, 6);
  s.ids.assign(size_t(m.config().max_seq_len) + 1, TokenId(4));
  s.ids[0] = kBos;
  s.sep_pos = 2;
  s.ids[2] = kSep;
  s.ids.back() = kEos;
  CHECK_THROWS_AS(m.eval_loss({s}), ShapeMismatch);
}
