// Shared domain vocabulary: element taxonomy, geometry in the model frame,
// task prompts and the parsed-document model.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dolphin {

constexpr int kDefaultFrameSize = 896;

// The 15 element types. Formulas are not a separate type: they live inside
// para content as $...$ spans.
enum class ElementType : uint8_t {
  title, author, sec, sub_sec, para, header, foot, fnote,
  watermark, fig, tab, cap, anno, alg, list
};

constexpr int kNumElementTypes = 15;

struct UnknownElementType : std::runtime_error {
  explicit UnknownElementType(const std::string& s)
      : std::runtime_error("unknown element type: '" + s + "'") {}
};

std::string_view element_type_tag(ElementType t);
ElementType element_type_parse(std::string_view s);
std::optional<ElementType> element_type_try_parse(std::string_view s);
const std::array<ElementType, kNumElementTypes>& all_element_types();

// Axis-aligned box in the padded square model frame, pixel units.
// Invariant: 0 <= x1 < x2 <= frame_size, same for y.
struct BoundingBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool valid(int frame_size) const {
    return 0 <= x1 && x1 < x2 && x2 <= frame_size &&
           0 <= y1 && y1 < y2 && y2 <= frame_size;
  }
  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }
  long area() const { return long(width()) * height(); }
  bool operator==(const BoundingBox&) const = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

struct LayoutElement {
  ElementType etype = ElementType::para;
  BoundingBox bbox;
  int order_index = 0;
  bool operator==(const LayoutElement&) const = default;
};

// Ordered page structure; iteration order is reading order.
struct LayoutSequence {
  std::vector<LayoutElement> elements;

  size_t size() const { return elements.size(); }
  bool empty() const { return elements.empty(); }
  // order_index values must be 0..n-1 with no gaps or duplicates,
  // ascending along the vector.
  bool valid(int frame_size) const;
  bool operator==(const LayoutSequence&) const = default;
};

enum class PromptKind : uint8_t { Layout, Paragraph, Table, Spotting, BoxQuery };

// One of the five task prompts. Canonical strings are fixed; BoxQuery
// interpolates its box as [x1,y1,x2,y2].
struct Prompt {
  PromptKind kind = PromptKind::Layout;
  std::string text;

  static Prompt layout();
  static Prompt paragraph();
  static Prompt table();
  static Prompt spotting();
  static Prompt box_query(const BoundingBox& b);
  bool operator==(const Prompt&) const = default;
};

// tab is parsed as HTML, everything else as plain text.
Prompt prompt_for(ElementType t);

enum class ContentFormat : uint8_t { PlainText, Html, LatexInline };

std::string_view content_format_tag(ContentFormat f);
ContentFormat content_format_for(ElementType t);

struct ParsedElement {
  LayoutElement element;
  std::string content;
  ContentFormat content_format = ContentFormat::PlainText;
  bool operator==(const ParsedElement&) const = default;
};

struct StageTiming {
  double stage1_ms = 0.0;
  double stage2_ms = 0.0;
  int n_elements = 0;
  int n_batches = 0;
};

struct ParsedDocument {
  int page_w = 0, page_h = 0;
  std::vector<ParsedElement> elements;
  StageTiming timing;
  std::vector<std::string> warnings;
};

// JSON wire format (field names fixed):
// {"page_w":int,"page_h":int,"elements":[{"type","bbox","order","format",
//  "content"}],"timing":{"stage1_ms","stage2_ms"}}
std::string to_json(const ParsedDocument& doc);
ParsedDocument parsed_document_from_json(const std::string& json);

}  // namespace dolphin
