#include "dolphin/pipeline.hpp"

#include <chrono>
#include <optional>
#include <sstream>

namespace dolphin {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

Pipeline::Pipeline(const Model& model, PipelineConfig cfg)
    : model_(model), cfg_(cfg) {
  if (cfg_.max_batch < 1) cfg_.max_batch = 1;
}

AnalyzeResult Pipeline::analyze_page(const PageImage& page) const {
  AnalyzeResult r;
  r.gray = page.channels == 1 ? page : page.to_gray();
  auto [frame, tf] = resize_pad(r.gray, model_.config().frame_size);
  r.frame = std::move(frame);
  r.transform = tf;
  const VisualFeatures vf = model_.encode(r.frame);
  const GenResult gen = model_.generate(Prompt::layout(), vf, cfg_.max_len);
  r.raw_text = gen.text;
  r.truncated = gen.truncated;
  if (gen.truncated)
    r.warnings.push_back({WarningKind::MalformedLine, 0, "layout generation truncated"});
  r.layout = parse_layout(gen.text, model_.config().frame_size, &r.warnings);
  return r;
}

ParsedDocument Pipeline::parse_elements(const AnalyzeResult& analysis) const {
  ParsedDocument doc;
  doc.page_w = analysis.gray.width;
  doc.page_h = analysis.gray.height;
  for (const auto& w : analysis.warnings) doc.warnings.push_back(to_string(w));

  const auto t0 = std::chrono::steady_clock::now();
  const int batch = cfg_.sequential ? 1 : cfg_.max_batch;
  const auto& elems = analysis.layout.elements;
  doc.timing.n_elements = int(elems.size());

  // box-query mode reads every element off the full-page features
  std::optional<VisualFeatures> page_feats;
  if (cfg_.use_box_query) page_feats = model_.encode(analysis.frame);

  for (size_t start = 0; start < elems.size(); start += size_t(batch)) {
    const size_t end = std::min(elems.size(), start + size_t(batch));
    std::vector<VisualFeatures> feats;
    std::vector<const VisualFeatures*> fp;
    std::vector<Prompt> prompts;
    std::vector<size_t> who;  // element index per batch slot
    for (size_t i = start; i < end; ++i) {
      ParsedElement pe;
      pe.element = elems[i];
      pe.content_format = content_format_for(elems[i].etype);
      doc.elements.push_back(std::move(pe));
      if (cfg_.use_box_query) {
        prompts.push_back(Prompt::box_query(elems[i].bbox));
        who.push_back(i);
        continue;
      }
      try {
        auto [crop, crop_tf] =
            crop_element(analysis.gray, analysis.transform, elems[i].bbox);
        (void)crop_tf;
        feats.push_back(model_.encode(crop));
        prompts.push_back(cfg_.generic_prompts ? Prompt::paragraph()
                                               : prompt_for(elems[i].etype));
        who.push_back(i);
      } catch (const std::exception& e) {
        doc.warnings.push_back("element " + std::to_string(i) + " skipped: " + e.what());
      }
    }
    if (prompts.empty()) continue;
    if (cfg_.use_box_query)
      fp.assign(prompts.size(), &*page_feats);
    else
      for (const auto& f : feats) fp.push_back(&f);
    const auto results = model_.generate_batch(fp, prompts, cfg_.max_len);
    ++doc.timing.n_batches;
    for (size_t s = 0; s < results.size(); ++s) {
      doc.elements[who[s]].content = results[s].text;
      if (results[s].truncated)
        doc.warnings.push_back("element " + std::to_string(who[s]) + " truncated");
    }
  }
  doc.timing.stage2_ms = cfg_.record_timing ? ms_since(t0) : 0.0;
  return doc;
}

ParsedDocument Pipeline::parse_document(const PageImage& page) const {
  const auto t0 = std::chrono::steady_clock::now();
  const AnalyzeResult analysis = analyze_page(page);
  const double stage1 = ms_since(t0);
  ParsedDocument doc = parse_elements(analysis);
  doc.timing.stage1_ms = cfg_.record_timing ? stage1 : 0.0;
  return doc;
}

std::string Pipeline::box_query(const PageImage& page, const SrcRect& box) const {
  const PageImage gray = page.channels == 1 ? page : page.to_gray();
  auto [frame, tf] = resize_pad(gray, model_.config().frame_size);
  const BoundingBox b = to_model_frame(box, tf);
  const VisualFeatures vf = model_.encode(frame);
  return model_.generate(Prompt::box_query(b), vf, cfg_.max_len).text;
}

std::vector<SpottedLine> Pipeline::text_spot(const PageImage& page,
                                             std::vector<ParseWarning>* warnings) const {
  const PageImage gray = page.channels == 1 ? page : page.to_gray();
  auto [frame, tf] = resize_pad(gray, model_.config().frame_size);
  (void)tf;
  const VisualFeatures vf = model_.encode(frame);
  const GenResult gen = model_.generate(Prompt::spotting(), vf, cfg_.max_len);
  return parse_spotting(gen.text, model_.config().frame_size, warnings);
}

std::string overlay_svg(const ParsedDocument& doc, int frame_size) {
  static const char* kPalette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231",
                                   "#911eb4", "#46f0f0", "#f032e6", "#bcf60c",
                                   "#fabebe", "#008080", "#e6beff", "#9a6324",
                                   "#800000", "#aaffc3", "#808000"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << frame_size
      << "\" height=\"" << frame_size << "\" viewBox=\"0 0 " << frame_size << ' '
      << frame_size << "\">\n";
  svg << "  <rect x=\"0\" y=\"0\" width=\"" << frame_size << "\" height=\""
      << frame_size << "\" fill=\"white\" stroke=\"#999\"/>\n";
  for (const auto& pe : doc.elements) {
    const auto& b = pe.element.bbox;
    const char* color = kPalette[size_t(pe.element.etype) % 15];
    svg << "  <rect x=\"" << b.x1 << "\" y=\"" << b.y1 << "\" width=\"" << b.width()
        << "\" height=\"" << b.height() << "\" fill=\"" << color
        << "\" fill-opacity=\"0.15\" stroke=\"" << color << "\"/>\n";
    svg << "  <text x=\"" << b.x1 + 2 << "\" y=\"" << b.y1 + 10
        << "\" font-size=\"8\" fill=\"" << color << "\">" << pe.element.order_index
        << ' ' << element_type_tag(pe.element.etype) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace dolphin
