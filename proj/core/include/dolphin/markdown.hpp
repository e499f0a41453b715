#pragma once

#include <string>

#include "dolphin/types.hpp"

namespace dolphin {

// Deterministic reading-order markdown rendering:
//   title "# ", sec "## ", sub_sec "### ", tab raw HTML, alg fenced code,
//   fig image placeholder, header/foot/watermark omitted, the rest plain
//   blocks. Blocks are separated by blank lines.
std::string assemble_markdown(const ParsedDocument& doc);

}  // namespace dolphin
