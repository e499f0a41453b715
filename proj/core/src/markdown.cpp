#include "dolphin/markdown.hpp"

namespace dolphin {

std::string assemble_markdown(const ParsedDocument& doc) {
  std::string out;
  auto emit = [&out](const std::string& block) {
    if (block.empty()) return;
    if (!out.empty()) out += "\n\n";
    out += block;
  };

  for (const auto& pe : doc.elements) {
    switch (pe.element.etype) {
      case ElementType::title:   emit("# " + pe.content); break;
      case ElementType::sec:     emit("## " + pe.content); break;
      case ElementType::sub_sec: emit("### " + pe.content); break;
      case ElementType::tab:     emit(pe.content); break;  // raw HTML block
      case ElementType::alg:     emit("```\n" + pe.content + "\n```"); break;
      case ElementType::fig:     emit("![fig](#)"); break;
      case ElementType::header:
      case ElementType::foot:
      case ElementType::watermark:
        break;  // omitted from the rendered document
      default:
        emit(pe.content);  // para, list, cap, anno, fnote, author
        break;
    }
  }
  return out;
}

}  // namespace dolphin
