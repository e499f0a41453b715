// Central finite differences in double precision against the reverse-mode
// gradients, on a randomized batch. Large tensors are stride-sampled.
#include <cmath>
#include <random>

#include "dolphin/model.hpp"
#include "model_forward.hpp"

namespace dolphin {

namespace {

double loss_value(const ModelConfig& cfg, const Params<double>& p,
                  const std::vector<TrainSample>& batch) {
  nn::Tape<double> tape;
  auto P = detail::make_param_refs(tape, p);
  auto g = detail::build_graph(tape, cfg, P, batch);
  return g.loss->value(0, 0);
}

std::vector<TrainSample> make_batch(const ModelConfig& cfg, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  auto rnd = [&rng](int lo, int hi) { return lo + int(rng() % uint64_t(hi - lo)); };
  std::vector<TrainSample> batch;
  for (int b = 0; b < 2; ++b) {
    TrainSample s;
    s.frame = PageImage(cfg.frame_size, cfg.frame_size, 1);
    for (auto& px : s.frame.data) px = uint8_t(rng() & 0xFF);
    s.ids.push_back(kBos);
    const int np = rnd(3, 7), nr = rnd(4, 10);
    for (int i = 0; i < np; ++i) s.ids.push_back(TokenId(rnd(4, cfg.vocab_size)));
    s.sep_pos = int(s.ids.size());
    s.ids.push_back(kSep);
    for (int i = 0; i < nr; ++i) s.ids.push_back(TokenId(rnd(4, cfg.vocab_size)));
    s.ids.push_back(kEos);
    if (b == 1) {  // exercise the zero-weight PAD path
      s.ids.push_back(kPad);
      s.ids.push_back(kPad);
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

}  // namespace

GradCheckResult finite_difference_check(const ModelConfig& cfg, uint64_t seed,
                                        double corrupt_scale) {
  ModelConfig c = cfg;
  c.validate();
  if (c.vocab_size < 8) throw InvalidModelConfig("gradient check needs vocab_size >= 8");

  Params<double> p;
  for (const auto& [name, w] : init_params(c)) p.emplace(name, w.cast<double>());
  const auto batch = make_batch(c, seed);

  // analytic gradients
  nn::Tape<double> tape;
  auto P = detail::make_param_refs(tape, p);
  auto g = detail::build_graph(tape, c, P, batch);
  tape.backward(g.loss);
  Params<double> grads;
  for (auto& [name, ref] : P.refs) {
    ref->ensure_grad();
    grads.emplace(name, ref->grad);
  }

  std::string corrupt_name;
  Eigen::Index ci = 0, cj = 0;
  if (corrupt_scale != 0.0) {
    double best = -1.0;
    for (const auto& [name, gm] : grads)
      for (Eigen::Index i = 0; i < gm.rows(); ++i)
        for (Eigen::Index j = 0; j < gm.cols(); ++j)
          if (std::abs(gm(i, j)) > best) {
            best = std::abs(gm(i, j));
            corrupt_name = name;
            ci = i;
            cj = j;
          }
    grads.at(corrupt_name)(ci, cj) *= corrupt_scale;
  }

  constexpr double h = 1e-4;
  GradCheckResult res;
  auto check_entry = [&](const std::string& name, Eigen::Index i, Eigen::Index j) {
    auto& w = p.at(name);
    const double orig = w(i, j);
    w(i, j) = orig + h;
    const double lp = loss_value(c, p, batch);
    w(i, j) = orig - h;
    const double lm = loss_value(c, p, batch);
    w(i, j) = orig;
    const double fd = (lp - lm) / (2.0 * h);
    const double an = grads.at(name)(i, j);
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_param = name;
    }
    ++res.n_checked;
  };

  constexpr Eigen::Index kMaxPerParam = 48;
  for (const auto& [name, w] : p) {
    const Eigen::Index n = w.size();
    const Eigen::Index stride = std::max<Eigen::Index>(1, n / kMaxPerParam);
    for (Eigen::Index flat = 0; flat < n; flat += stride)
      check_entry(name, flat / w.cols(), flat % w.cols());
  }
  if (!corrupt_name.empty()) check_entry(corrupt_name, ci, cj);
  return res;
}

}  // namespace dolphin
