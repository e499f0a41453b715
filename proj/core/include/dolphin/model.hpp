// Vision encoder–decoder: windowed-attention encoder over image patches,
// autoregressive transformer decoder with prompt-conditioned generation.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dolphin/grammar.hpp"
#include "dolphin/image.hpp"
#include "dolphin/tensor.hpp"
#include "dolphin/types.hpp"

namespace dolphin {

struct InvalidModelConfig : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int frame_size = 128;
  int patch_size = 4;
  int window_size = 4;
  std::vector<int> stage_depths{1, 1};
  std::vector<int> stage_heads{2, 4};
  int embed_dim = 32;        // channels at stage 0, doubles per merge
  int decoder_dim = 64;
  int decoder_layers = 2;
  int decoder_heads = 4;
  int mlp_ratio = 4;
  int max_seq_len = 512;
  int vocab_size = 0;  // filled from the vocabulary at construction
  uint64_t seed = 0;

  static ModelConfig desk();   // the default, trainable on one CPU core
  static ModelConfig micro();  // tiny, for gradient checks and fast tests
  static ModelConfig paper();  // full-scale reference shape (not trainable here)

  int num_stages() const { return int(stage_depths.size()); }
  int grid_size(int stage) const { return frame_size / patch_size >> stage; }
  int stage_dim(int stage) const { return embed_dim << stage; }
  int final_dim() const { return stage_dim(num_stages() - 1); }
  int n_memory_tokens() const { const int g = grid_size(num_stages() - 1); return g * g; }

  void validate() const;  // throws InvalidModelConfig
  std::string to_json() const;
  static ModelConfig from_json(const std::string& json);
  bool operator==(const ModelConfig&) const = default;
};

// Encoder output for one image: final_dim x n_memory_tokens, column per patch.
struct VisualFeatures {
  nn::MatF features;
};

template <typename S>
using Params = std::map<std::string, nn::Mat<S>>;

struct TrainSample {
  PageImage frame;            // grayscale, frame_size x frame_size
  std::vector<TokenId> ids;   // [BOS] prompt [SEP] response [EOS]
  int sep_pos = 0;            // index of SEP in ids
};

struct OptimizerConfig {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
  float grad_clip = 1.0f;  // global norm; <=0 disables
};

struct OptimizerState {
  int64_t step = 0;
  Params<float> m, v;
};

struct GenResult {
  std::vector<TokenId> ids;  // response tokens, specials removed
  std::string text;
  bool truncated = false;
};

class Model {
 public:
  Model(ModelConfig cfg, Vocabulary vocab);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  Params<float>& params() { return params_; }
  const Params<float>& params() const { return params_; }

  // Frame must be grayscale frame_size x frame_size; throws ShapeMismatch.
  VisualFeatures encode(const PageImage& frame) const;

  GenResult generate(const Prompt& prompt, const VisualFeatures& mem,
                     int max_len = 0) const;  // 0 = config().max_seq_len
  // Lockstep batched greedy decode. Bit-identical to per-item generate().
  std::vector<GenResult> generate_batch(
      const std::vector<const VisualFeatures*>& mems,
      const std::vector<Prompt>& prompts, int max_len = 0) const;

  // Teacher-forced logits for one sample (rows = positions); test hook for
  // checking the cached decode path against the training-graph math.
  nn::MatF forced_logits(const TrainSample& s) const;

  // One AdamW step over the batch; returns the loss. Throws NonFiniteLoss.
  float train_step(const std::vector<TrainSample>& batch,
                   const OptimizerConfig& opt, OptimizerState& state,
                   float lr_override = -1.0f);
  float eval_loss(const std::vector<TrainSample>& batch) const;

  void save(const std::string& path) const;
  static Model load(const std::string& path);

  std::vector<TokenId> build_sequence(const Prompt& prompt,
                                      const std::string& response,
                                      int* sep_pos) const;

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  Params<float> params_;
};

Params<float> init_params(const ModelConfig& cfg);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  int n_checked = 0;
};

// Compares reverse-mode gradients against central finite differences in
// double precision on a randomized micro-scale batch. corrupt_scale != 0
// multiplies one analytic gradient entry to exercise the detector.
GradCheckResult finite_difference_check(const ModelConfig& cfg, uint64_t seed,
                                        double corrupt_scale = 0.0);

}  // namespace dolphin
