// Deterministic synthetic document generator with exact multi-granularity
// ground truth. Pages are rendered from a built-in 5x7 bitmap font (scaled
// x2); tables are ruled grids, figures hatched rectangles.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dolphin/image.hpp"
#include "dolphin/types.hpp"

namespace dolphin {

struct LayoutOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SynthConfig {
  int page_width = 256;
  int page_height = 256;
  int columns = 2;
  // sampling weights over synthesizable element kinds; normalized to 1
  std::map<std::string, double> element_mix = {
      {"sec", 0.18}, {"para", 0.38}, {"tab", 0.12}, {"cap", 0.08},
      {"fig", 0.10}, {"list", 0.08}, {"header", 0.03}, {"foot", 0.03}};
  double formula_prob = 0.25;
  double blank_page_prob = 0.02;
  std::string charset = "abcdefghijklmnopqrstuvwxyz0123456789";
  int min_elements = 2;
  int max_elements = 6;
  uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static SynthConfig from_json(const std::string& json);
};

struct GroundTruth {
  LayoutSequence layout;
  std::vector<std::string> contents;                 // per element
  std::vector<std::vector<BoundingBox>> line_boxes;  // per element
  std::vector<std::vector<std::string>> line_texts;  // per element, parallel to line_boxes
  int page_w = 0, page_h = 0;

  std::string to_json() const;
  static GroundTruth from_json(const std::string& json);
};

// Deterministic for (cfg.seed, index). Throws LayoutOverflow after 10
// failed packing attempts.
std::pair<PageImage, GroundTruth> gen_page(const SynthConfig& cfg, uint64_t index);

struct CorpusManifest {
  std::vector<std::string> page_files;  // relative paths, index order
  std::vector<std::string> gt_files;
  std::vector<std::string> splits;  // "train" or "heldout"
  std::vector<std::string> element_files;   // element crop PNGs
  std::vector<std::string> element_gts;     // per-crop ground truth JSONs
  uint64_t seed = 0;
  std::string config_hash;  // sha256 of the config JSON

  std::string to_json() const;
  static CorpusManifest from_json(const std::string& json);
  static CorpusManifest load(const std::string& dir);
};

// Writes n pages (PNG + gt JSON), per-element crop samples, and
// manifest.json with a 90/10 train/heldout split by hash of index.
CorpusManifest gen_corpus(const SynthConfig& cfg, int n, const std::string& out_dir);

std::string sha256_hex(const std::string& bytes);

}  // namespace dolphin
