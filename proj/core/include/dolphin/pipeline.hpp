// Two-stage page parsing: analyze the whole page into a layout sequence,
// then parse each element from a crop of the original image, batched.
#pragma once

#include "dolphin/grammar.hpp"
#include "dolphin/image.hpp"
#include "dolphin/model.hpp"
#include "dolphin/preprocess.hpp"
#include "dolphin/types.hpp"

namespace dolphin {

struct PipelineConfig {
  int max_batch = 16;      // elements per decode batch in stage 2
  bool sequential = false; // batch size 1; output must match batched mode
  int max_len = 0;         // generation cap, 0 = model max_seq_len
  bool record_timing = true;
  // ablation switches: stage 2 via full-page box queries instead of crops,
  // and a single generic prompt instead of per-type routing
  bool use_box_query = false;
  bool generic_prompts = false;
};

struct AnalyzeResult {
  LayoutSequence layout;
  FrameTransform transform;
  PageImage gray;        // original page, grayscale
  PageImage frame;       // model-frame page
  std::string raw_text;  // generated layout markup
  std::vector<ParseWarning> warnings;
  bool truncated = false;
};

class Pipeline {
 public:
  explicit Pipeline(const Model& model, PipelineConfig cfg = {});

  AnalyzeResult analyze_page(const PageImage& page) const;

  // Stage 2 over an analyze result; elements keep reading order. A failing
  // element yields empty content plus a warning, never aborts the page.
  ParsedDocument parse_elements(const AnalyzeResult& analysis) const;

  ParsedDocument parse_document(const PageImage& page) const;

  // Single-element query: box in original-image pixels.
  std::string box_query(const PageImage& page, const SrcRect& box) const;

  std::vector<SpottedLine> text_spot(const PageImage& page,
                                     std::vector<ParseWarning>* warnings = nullptr) const;

  const PipelineConfig& config() const { return cfg_; }

 private:
  const Model& model_;
  PipelineConfig cfg_;
};

// Debug overlay: layout boxes with type labels and reading order.
std::string overlay_svg(const ParsedDocument& doc, int frame_size);

}  // namespace dolphin
