#include "dolphin/types.hpp"

#include <algorithm>

#include "json.hpp"

namespace dolphin {

namespace {
constexpr std::array<std::string_view, kNumElementTypes> kTags = {
    "title", "author", "sec", "sub_sec", "para", "header", "foot", "fnote",
    "watermark", "fig", "tab", "cap", "anno", "alg", "list"};
}

std::string_view element_type_tag(ElementType t) {
  return kTags[static_cast<size_t>(t)];
}

std::optional<ElementType> element_type_try_parse(std::string_view s) {
  for (size_t i = 0; i < kTags.size(); ++i)
    if (kTags[i] == s) return static_cast<ElementType>(i);
  return std::nullopt;
}

ElementType element_type_parse(std::string_view s) {
  if (auto t = element_type_try_parse(s)) return *t;
  throw UnknownElementType(std::string(s));
}

const std::array<ElementType, kNumElementTypes>& all_element_types() {
  static const auto types = [] {
    std::array<ElementType, kNumElementTypes> a{};
    for (int i = 0; i < kNumElementTypes; ++i) a[i] = static_cast<ElementType>(i);
    return a;
  }();
  return types;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const int ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  const int ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  if (ix1 >= ix2 || iy1 >= iy2) return 0.0;
  const double inter = double(ix2 - ix1) * (iy2 - iy1);
  const double uni = double(a.area()) + double(b.area()) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

bool LayoutSequence::valid(int frame_size) const {
  for (size_t i = 0; i < elements.size(); ++i) {
    if (elements[i].order_index != int(i)) return false;
    if (!elements[i].bbox.valid(frame_size)) return false;
  }
  return true;
}

Prompt Prompt::layout() {
  return {PromptKind::Layout, "Parse the reading order of this document."};
}
Prompt Prompt::paragraph() {
  return {PromptKind::Paragraph, "Read text in the image."};
}
Prompt Prompt::table() {
  return {PromptKind::Table, "Parse the table in the image."};
}
Prompt Prompt::spotting() {
  return {PromptKind::Spotting, "Detect and recognize all the text lines in the image."};
}
Prompt Prompt::box_query(const BoundingBox& b) {
  return {PromptKind::BoxQuery,
          "Read the text in the image within the specified box [" +
              std::to_string(b.x1) + "," + std::to_string(b.y1) + "," +
              std::to_string(b.x2) + "," + std::to_string(b.y2) + "]."};
}

Prompt prompt_for(ElementType t) {
  return t == ElementType::tab ? Prompt::table() : Prompt::paragraph();
}

std::string_view content_format_tag(ContentFormat f) {
  switch (f) {
    case ContentFormat::PlainText: return "plain";
    case ContentFormat::Html: return "html";
    case ContentFormat::LatexInline: return "latex_inline";
  }
  return "plain";
}

ContentFormat content_format_for(ElementType t) {
  return t == ElementType::tab ? ContentFormat::Html : ContentFormat::PlainText;
}

std::string to_json(const ParsedDocument& doc) {
  nlohmann::ordered_json j;
  j["page_w"] = doc.page_w;
  j["page_h"] = doc.page_h;
  j["elements"] = nlohmann::ordered_json::array();
  for (const auto& pe : doc.elements) {
    nlohmann::ordered_json e;
    e["type"] = std::string(element_type_tag(pe.element.etype));
    e["bbox"] = {pe.element.bbox.x1, pe.element.bbox.y1, pe.element.bbox.x2,
                 pe.element.bbox.y2};
    e["order"] = pe.element.order_index;
    e["format"] = std::string(content_format_tag(pe.content_format));
    e["content"] = pe.content;
    j["elements"].push_back(std::move(e));
  }
  j["timing"]["stage1_ms"] = doc.timing.stage1_ms;
  j["timing"]["stage2_ms"] = doc.timing.stage2_ms;
  if (!doc.warnings.empty()) j["warnings"] = doc.warnings;
  return j.dump(2);
}

ParsedDocument parsed_document_from_json(const std::string& json) {
  auto j = nlohmann::json::parse(json);
  ParsedDocument doc;
  doc.page_w = j.at("page_w").get<int>();
  doc.page_h = j.at("page_h").get<int>();
  for (const auto& e : j.at("elements")) {
    ParsedElement pe;
    pe.element.etype = element_type_parse(e.at("type").get<std::string>());
    const auto& b = e.at("bbox");
    pe.element.bbox = {b.at(0).get<int>(), b.at(1).get<int>(),
                       b.at(2).get<int>(), b.at(3).get<int>()};
    pe.element.order_index = e.at("order").get<int>();
    const auto fmt = e.at("format").get<std::string>();
    pe.content_format = fmt == "html"           ? ContentFormat::Html
                        : fmt == "latex_inline" ? ContentFormat::LatexInline
                                                : ContentFormat::PlainText;
    pe.content = e.at("content").get<std::string>();
    doc.elements.push_back(std::move(pe));
  }
  if (j.contains("timing")) {
    doc.timing.stage1_ms = j["timing"].value("stage1_ms", 0.0);
    doc.timing.stage2_ms = j["timing"].value("stage2_ms", 0.0);
  }
  if (j.contains("warnings"))
    doc.warnings = j["warnings"].get<std::vector<std::string>>();
  return doc;
}

}  // namespace dolphin
