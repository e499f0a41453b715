#include "dolphin/model.hpp"

#include <cmath>
#include <random>

#include "json.hpp"
#include "model_forward.hpp"

namespace dolphin {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.frame_size = 32;
  c.patch_size = 4;
  c.window_size = 2;
  c.stage_depths = {1};
  c.stage_heads = {2};
  c.embed_dim = 8;
  c.decoder_dim = 16;
  c.decoder_layers = 1;
  c.decoder_heads = 2;
  c.mlp_ratio = 2;
  c.max_seq_len = 128;
  c.vocab_size = 24;
  return c;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.frame_size = 896;
  c.patch_size = 4;
  c.window_size = 7;
  c.stage_depths = {2, 2, 14, 2};
  c.stage_heads = {4, 8, 16, 32};
  c.embed_dim = 128;
  c.decoder_dim = 1024;
  c.decoder_layers = 10;
  c.decoder_heads = 16;
  c.mlp_ratio = 4;
  c.max_seq_len = 4096;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidModelConfig(m); };
  if (frame_size < 8) fail("frame_size must be >= 8");
  if (patch_size < 1 || frame_size % patch_size != 0)
    fail("frame_size must be a positive multiple of patch_size");
  if (stage_depths.empty() || stage_depths.size() != stage_heads.size())
    fail("stage_depths and stage_heads must be non-empty and equal length");
  for (int s = 0; s < num_stages(); ++s) {
    if (stage_depths[size_t(s)] < 1) fail("stage depth must be >= 1");
    const int g = grid_size(s);
    if (g < window_size || g % window_size != 0)
      fail("patch grid at each stage must be a multiple of window_size");
    if (stage_heads[size_t(s)] < 1 || stage_dim(s) % stage_heads[size_t(s)] != 0)
      fail("stage dim must be divisible by stage heads");
  }
  if (window_size < 2) fail("window_size must be >= 2");
  if (decoder_layers < 1) fail("decoder_layers must be >= 1");
  if (decoder_heads < 1 || decoder_dim % decoder_heads != 0)
    fail("decoder_dim must be divisible by decoder_heads");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (max_seq_len < 8) fail("max_seq_len must be >= 8");
  if (vocab_size < 0) fail("vocab_size must be >= 0");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["frame_size"] = frame_size;
  j["patch_size"] = patch_size;
  j["window_size"] = window_size;
  j["stage_depths"] = stage_depths;
  j["stage_heads"] = stage_heads;
  j["embed_dim"] = embed_dim;
  j["decoder_dim"] = decoder_dim;
  j["decoder_layers"] = decoder_layers;
  j["decoder_heads"] = decoder_heads;
  j["mlp_ratio"] = mlp_ratio;
  j["max_seq_len"] = max_seq_len;
  j["vocab_size"] = vocab_size;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json) {
  const auto j = nlohmann::json::parse(json);
  ModelConfig c;
  c.frame_size = j.at("frame_size");
  c.patch_size = j.at("patch_size");
  c.window_size = j.at("window_size");
  c.stage_depths = j.at("stage_depths").get<std::vector<int>>();
  c.stage_heads = j.at("stage_heads").get<std::vector<int>>();
  c.embed_dim = j.at("embed_dim");
  c.decoder_dim = j.at("decoder_dim");
  c.decoder_layers = j.at("decoder_layers");
  c.decoder_heads = j.at("decoder_heads");
  c.mlp_ratio = j.at("mlp_ratio");
  c.max_seq_len = j.at("max_seq_len");
  c.vocab_size = j.at("vocab_size");
  c.seed = j.at("seed");
  c.validate();
  return c;
}

namespace detail {

std::vector<int> window_partition_index(int g, int ws, int shift) {
  std::vector<int> idx;
  idx.reserve(size_t(g) * size_t(g));
  const int nw = g / ws;
  for (int wy = 0; wy < nw; ++wy)
    for (int wx = 0; wx < nw; ++wx)
      for (int dy = 0; dy < ws; ++dy)
        for (int dx = 0; dx < ws; ++dx) {
          const int y = (wy * ws + dy + shift) % g;
          const int x = (wx * ws + dx + shift) % g;
          idx.push_back(y * g + x);
        }
  return idx;
}

std::vector<int> inverse_index(const std::vector<int>& idx) {
  std::vector<int> inv(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) inv[size_t(idx[k])] = int(k);
  return inv;
}

std::vector<std::array<int, 4>> merge_index(int g) {
  std::vector<std::array<int, 4>> idx;
  idx.reserve(size_t(g / 2) * size_t(g / 2));
  for (int i = 0; i < g / 2; ++i)
    for (int j = 0; j < g / 2; ++j)
      idx.push_back({(2 * i) * g + 2 * j, (2 * i + 1) * g + 2 * j,
                     (2 * i) * g + 2 * j + 1, (2 * i + 1) * g + 2 * j + 1});
  return idx;
}

namespace {

// Walks every parameter in creation order; single source of truth for
// names and shapes.
template <typename Fn>
void walk_params(const ModelConfig& cfg, Fn add) {
  const int p2 = cfg.patch_size * cfg.patch_size;
  const int c0 = cfg.embed_dim;
  add("enc.patch_embed.w", p2, c0);
  add("enc.patch_embed.b", 1, c0);
  add("enc.pos", cfg.grid_size(0) * cfg.grid_size(0), c0);
  for (int s = 0; s < cfg.num_stages(); ++s) {
    const int c = cfg.stage_dim(s);
    for (int b = 0; b < cfg.stage_depths[size_t(s)]; ++b) {
      const std::string bp = "enc.s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
      add(bp + "ln1.g", 1, c);
      add(bp + "ln1.b", 1, c);
      for (const char* w : {"wq", "wk", "wv", "wo"}) add(bp + "attn." + std::string(w), c, c);
      for (const char* b2 : {"bq", "bk", "bv", "bo"}) add(bp + "attn." + std::string(b2), 1, c);
      add(bp + "ln2.g", 1, c);
      add(bp + "ln2.b", 1, c);
      add(bp + "mlp.w1", c, cfg.mlp_ratio * c);
      add(bp + "mlp.b1", 1, cfg.mlp_ratio * c);
      add(bp + "mlp.w2", cfg.mlp_ratio * c, c);
      add(bp + "mlp.b2", 1, c);
    }
    if (s + 1 < cfg.num_stages()) {
      const std::string mp = "enc.merge" + std::to_string(s) + ".";
      add(mp + "ln.g", 1, 4 * c);
      add(mp + "ln.b", 1, 4 * c);
      add(mp + "w", 4 * c, 2 * c);
      add(mp + "b", 1, 2 * c);
    }
  }
  add("enc.final_ln.g", 1, cfg.final_dim());
  add("enc.final_ln.b", 1, cfg.final_dim());

  const int d = cfg.decoder_dim;
  add("dec.tok_embed", cfg.vocab_size, d);
  add("dec.pos", cfg.max_seq_len, d);
  add("dec.mem_proj.w", cfg.final_dim(), d);
  add("dec.mem_proj.b", 1, d);
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string lp = "dec.l" + std::to_string(l) + ".";
    for (const char* ln : {"ln1", "ln2", "ln3"}) {
      add(lp + std::string(ln) + ".g", 1, d);
      add(lp + std::string(ln) + ".b", 1, d);
    }
    for (const char* grp : {"self", "cross"}) {
      for (const char* w : {"wq", "wk", "wv", "wo"})
        add(lp + std::string(grp) + "." + w, d, d);
      for (const char* b : {"bq", "bk", "bv", "bo"})
        add(lp + std::string(grp) + "." + b, 1, d);
    }
    add(lp + "mlp.w1", d, cfg.mlp_ratio * d);
    add(lp + "mlp.b1", 1, cfg.mlp_ratio * d);
    add(lp + "mlp.w2", cfg.mlp_ratio * d, d);
    add(lp + "mlp.b2", 1, d);
  }
  add("dec.final_ln.g", 1, d);
  add("dec.final_ln.b", 1, d);
  add("dec.out.w", d, cfg.vocab_size);
  add("dec.out.b", 1, cfg.vocab_size);
}

}  // namespace

std::map<std::string, std::pair<int, int>> param_shapes(const ModelConfig& cfg) {
  std::map<std::string, std::pair<int, int>> shapes;
  walk_params(cfg, [&shapes](const std::string& n, int r, int c) { shapes[n] = {r, c}; });
  return shapes;
}

std::vector<std::string> param_order(const ModelConfig& cfg) {
  std::vector<std::string> order;
  walk_params(cfg, [&order](const std::string& n, int, int) { order.push_back(n); });
  return order;
}

}  // namespace detail

namespace {

// Box-Muller over raw mt19937_64 output; distribution objects in the
// standard library are implementation-defined, this is not.
struct Gauss {
  std::mt19937_64 rng;
  double spare = 0.0;
  bool has = false;

  explicit Gauss(uint64_t seed) : rng(seed) {}

  double next() {
    if (has) {
      has = false;
      return spare;
    }
    double u1;
    do {
      u1 = double(rng() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    const double u2 = double(rng() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * 3.14159265358979323846 * u2;
    spare = r * std::sin(th);
    has = true;
    return r * std::cos(th);
  }
};

bool is_layernorm_gain(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
}

}  // namespace

Params<float> init_params(const ModelConfig& cfg) {
  const auto shapes = detail::param_shapes(cfg);
  Params<float> p;
  Gauss gauss(cfg.seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
  for (const auto& name : detail::param_order(cfg)) {
    const auto [rows, cols] = shapes.at(name);
    nn::MatF m(rows, cols);
    if (is_layernorm_gain(name)) {
      m.setOnes();
    } else if (rows == 1) {
      m.setZero();
    } else {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = float(gauss.next() * 0.02);
    }
    p.emplace(name, std::move(m));
  }
  return p;
}

Model::Model(ModelConfig cfg, Vocabulary vocab)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  cfg_.vocab_size = vocab_.size();
  cfg_.validate();
  if (cfg_.vocab_size < 5) throw InvalidModelConfig("vocabulary too small");
  params_ = init_params(cfg_);
}

VisualFeatures Model::encode(const PageImage& frame) const {
  nn::Tape<float> tape;
  auto P = detail::make_param_refs(tape, params_);
  auto mem = detail::encode_on_tape(tape, cfg_, P, frame);
  VisualFeatures vf;
  vf.features = mem->value.transpose();  // d x N
  return vf;
}

std::vector<TokenId> Model::build_sequence(const Prompt& prompt,
                                           const std::string& response,
                                           int* sep_pos) const {
  auto strip = [this](const std::string& s) {
    auto ids = vocab_.encode_text(s);  // BOS ... EOS
    return std::vector<TokenId>(ids.begin() + 1, ids.end() - 1);
  };
  std::vector<TokenId> ids{kBos};
  for (TokenId t : strip(prompt.text)) ids.push_back(t);
  if (sep_pos) *sep_pos = int(ids.size());
  ids.push_back(kSep);
  for (TokenId t : strip(response)) ids.push_back(t);
  ids.push_back(kEos);
  return ids;
}

nn::MatF Model::forced_logits(const TrainSample& s) const {
  nn::Tape<float> tape;
  auto P = detail::make_param_refs(tape, params_);
  auto g = detail::build_graph(tape, cfg_, P, {s});
  return g.logits->value;
}

float Model::eval_loss(const std::vector<TrainSample>& batch) const {
  nn::Tape<float> tape;
  auto P = detail::make_param_refs(tape, params_);
  auto g = detail::build_graph(tape, cfg_, P, batch);
  return g.loss->value(0, 0);
}

float Model::train_step(const std::vector<TrainSample>& batch,
                        const OptimizerConfig& opt, OptimizerState& state,
                        float lr_override) {
  nn::Tape<float> tape;
  auto P = detail::make_param_refs(tape, params_);
  auto g = detail::build_graph(tape, cfg_, P, batch);
  const float loss = g.loss->value(0, 0);
  if (!std::isfinite(loss)) throw NonFiniteLoss("loss is not finite");
  tape.backward(g.loss);

  // global-norm clip
  double sq = 0.0;
  for (auto& [name, ref] : P.refs) {
    ref->ensure_grad();
    sq += double(ref->grad.squaredNorm());
  }
  float scale = 1.0f;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NonFiniteLoss("gradient is not finite");
  if (opt.grad_clip > 0.0f && norm > opt.grad_clip)
    scale = float(opt.grad_clip / norm);

  state.step += 1;
  const float lr = lr_override >= 0.0f ? lr_override : opt.lr;
  const float bc1 = 1.0f - std::pow(opt.beta1, float(state.step));
  const float bc2 = 1.0f - std::pow(opt.beta2, float(state.step));
  for (auto& [name, w] : params_) {
    const nn::MatF grad = P.refs.at(name)->grad * scale;
    auto& m = state.m.try_emplace(name, nn::MatF::Zero(w.rows(), w.cols())).first->second;
    auto& v = state.v.try_emplace(name, nn::MatF::Zero(w.rows(), w.cols())).first->second;
    m = opt.beta1 * m + (1.0f - opt.beta1) * grad;
    v = opt.beta2 * v + (1.0f - opt.beta2) * grad.cwiseProduct(grad);
    const nn::MatF mhat = m / bc1;
    const nn::MatF vhat = v / bc2;
    nn::MatF update =
        mhat.array() / (vhat.array().sqrt() + opt.eps) * lr;
    if (w.rows() > 1) update += opt.weight_decay * lr * w;  // no decay on 1-d params
    w -= update;
  }
  return loss;
}

}  // namespace dolphin
