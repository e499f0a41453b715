// Mixed-task training over a generated corpus: page-level layout, text
// spotting and box queries, plus element-level parsing of the crop samples.
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dolphin/model.hpp"

namespace dolphin {

struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainerConfig {
  std::string corpus_dir;
  int epochs = 12;
  int batch_size = 8;
  float lr = 3e-4f;
  float min_lr_frac = 0.1f;  // cosine decay floor as a fraction of lr
  int warmup_steps = 100;
  double page_spot_prob = 0.35;      // extra spotting sample per train page
  double page_boxquery_prob = 0.35;  // extra box-query sample per train page
  double element_prob = 1.0;         // keep probability per element sample
  uint64_t seed = 0;
  int log_every = 200;          // batches between progress lines
  int heldout_ed_pages = 4;     // held-out pages parsed per epoch for the ED log
  std::string checkpoint_path;  // saved after every epoch when non-empty
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double heldout_loss = 0.0;
  double heldout_ed = 1.0;  // mean assembled-markdown ED on probe pages
  double seconds = 0.0;
  int n_batches = 0;
};

class Trainer {
 public:
  Trainer(Model& model, TrainerConfig cfg);

  // Returns per-epoch stats; writes progress to log when given.
  std::vector<EpochStats> run(std::ostream* log = nullptr);

 private:
  Model& model_;
  TrainerConfig cfg_;
};

}  // namespace dolphin
