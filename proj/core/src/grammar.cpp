#include "dolphin/grammar.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace dolphin {

namespace {

const char* kMarkupTokens[] = {
    // HTML table markup
    "<table>", "</table>", "<thead>", "</thead>", "<tbody>", "</tbody>",
    "<tr>", "</tr>", "<td>", "</td>", "<td", "colspan=\"", "rowspan=\"", "\">",
    // LaTeX commands common in synthetic formulas
    "\\frac", "\\sqrt", "\\sum", "\\int", "\\cdot", "\\times", "\\pm",
    "\\leq", "\\geq", "\\neq", "\\infty", "\\alpha", "\\beta", "\\gamma",
    "\\pi", "\\theta", "\\lambda", "\\mu", "\\sigma", "\\partial",
    "\\left", "\\right", "\\sin", "\\cos", "\\log", "\\exp", "\\lim",
    "\\rightarrow", "^{", "_{", "}{",
};

}  // namespace

Vocabulary Vocabulary::builtin() {
  std::vector<std::string> toks = {"<bos>", "<eos>", "<pad>", "<sep>"};
  for (ElementType t : all_element_types()) toks.emplace_back(element_type_tag(t));
  toks.emplace_back("line");  // spotting tag
  for (int c = 0x20; c <= 0x7E; ++c) toks.push_back(std::string(1, char(c)));
  toks.emplace_back("\n");
  toks.emplace_back("\t");
  for (const char* m : kMarkupTokens) toks.emplace_back(m);
  return from_tokens(std::move(toks));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.build_index();
  return v;
}

void Vocabulary::build_index() {
  index_.clear();
  for (size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = TokenId(i);

  by_first_byte_.assign(256, {});
  for (size_t i = 4; i < tokens_.size(); ++i) {  // specials never match text
    if (tokens_[i].empty()) continue;
    by_first_byte_[uint8_t(tokens_[i][0])].push_back(TokenId(i));
  }
  for (auto& bucket : by_first_byte_)
    std::sort(bucket.begin(), bucket.end(), [this](TokenId a, TokenId b) {
      if (tokens_[a].size() != tokens_[b].size())
        return tokens_[a].size() > tokens_[b].size();
      return a < b;
    });
}

TokenId Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw std::out_of_range("token not in vocabulary: " + token);
  return it->second;
}

std::vector<TokenId> Vocabulary::encode_text(const std::string& s) const {
  std::vector<TokenId> out;
  out.reserve(s.size() + 2);
  out.push_back(kBos);
  size_t pos = 0;
  while (pos < s.size()) {
    const auto& bucket = by_first_byte_[uint8_t(s[pos])];
    TokenId hit = -1;
    for (TokenId id : bucket) {
      const std::string& t = tokens_[size_t(id)];
      if (s.compare(pos, t.size(), t) == 0) { hit = id; break; }
    }
    if (hit < 0)
      throw UntokenizableInput(pos, "untokenizable byte at offset " + std::to_string(pos));
    out.push_back(hit);
    pos += tokens_[size_t(hit)].size();
  }
  out.push_back(kEos);
  return out;
}

std::string Vocabulary::decode_tokens(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 4 || id >= size()) continue;
    out += tokens_[size_t(id)];
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  out << serialize();
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    // escape so one-token-per-line survives the newline/tab tokens
    std::string esc;
    for (char c : t) {
      if (c == '\n') esc += "\\n";
      else if (c == '\t') esc += "\\t";
      else if (c == '\\') esc += "\\\\";
      else esc += c;
    }
    out += esc;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  std::vector<std::string> toks;
  std::string line;
  while (std::getline(in, line)) {
    std::string t;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '\\' && i + 1 < line.size()) {
        const char n = line[++i];
        t += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        t += line[i];
      }
    }
    toks.push_back(std::move(t));
  }
  return from_tokens(std::move(toks));
}

std::string to_string(const ParseWarning& w) {
  std::string kind = w.kind == WarningKind::MalformedLine ? "MalformedLine" : "InvalidBox";
  return kind + " at line " + std::to_string(w.line_no) + ": " + w.detail;
}

std::string serialize_layout(const LayoutSequence& seq) {
  std::string out;
  for (size_t i = 0; i < seq.elements.size(); ++i) {
    const auto& e = seq.elements[i];
    if (i) out += '\n';
    out += element_type_tag(e.etype);
    out += '\t';
    out += std::to_string(e.bbox.x1) + "," + std::to_string(e.bbox.y1) + "," +
           std::to_string(e.bbox.x2) + "," + std::to_string(e.bbox.y2);
  }
  return out;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

bool parse_int(const std::string& s, int& out) {
  if (s.empty() || s.size() > 9) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

// Parses "x1,y1,x2,y2"; returns false on arity or integer errors.
bool parse_box(const std::string& s, BoundingBox& box) {
  auto parts = split(s, ',');
  if (parts.size() != 4) return false;
  return parse_int(parts[0], box.x1) && parse_int(parts[1], box.y1) &&
         parse_int(parts[2], box.x2) && parse_int(parts[3], box.y2);
}

void warn(std::vector<ParseWarning>* ws, WarningKind k, int line_no, std::string detail) {
  if (ws) ws->push_back({k, line_no, std::move(detail)});
}

}  // namespace

LayoutSequence parse_layout(const std::string& text, int frame_size,
                            std::vector<ParseWarning>* warnings) {
  LayoutSequence seq;
  if (text.empty()) return seq;
  int line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 2) {
      warn(warnings, WarningKind::MalformedLine, line_no, "expected tag<TAB>box");
      continue;
    }
    auto etype = element_type_try_parse(fields[0]);
    if (!etype) {
      warn(warnings, WarningKind::MalformedLine, line_no, "unknown tag '" + fields[0] + "'");
      continue;
    }
    BoundingBox box;
    if (!parse_box(fields[1], box)) {
      warn(warnings, WarningKind::MalformedLine, line_no, "bad box '" + fields[1] + "'");
      continue;
    }
    if (!box.valid(frame_size)) {
      warn(warnings, WarningKind::InvalidBox, line_no, "box violates frame invariants");
      continue;
    }
    seq.elements.push_back({*etype, box, int(seq.elements.size())});
  }
  return seq;
}

std::string serialize_spotting(const std::vector<SpottedLine>& lines) {
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (i) out += '\n';
    out += "line\t";
    out += std::to_string(l.bbox.x1) + "," + std::to_string(l.bbox.y1) + "," +
           std::to_string(l.bbox.x2) + "," + std::to_string(l.bbox.y2);
    out += '\t';
    out += l.text;
  }
  return out;
}

std::vector<SpottedLine> parse_spotting(const std::string& text, int frame_size,
                                        std::vector<ParseWarning>* warnings) {
  std::vector<SpottedLine> out;
  if (text.empty()) return out;
  int line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3 || fields[0] != "line") {
      warn(warnings, WarningKind::MalformedLine, line_no, "expected line<TAB>box<TAB>text");
      continue;
    }
    BoundingBox box;
    if (!parse_box(fields[1], box)) {
      warn(warnings, WarningKind::MalformedLine, line_no, "bad box '" + fields[1] + "'");
      continue;
    }
    if (!box.valid(frame_size)) {
      warn(warnings, WarningKind::InvalidBox, line_no, "box violates frame invariants");
      continue;
    }
    out.push_back({box, fields[2]});
  }
  return out;
}

}  // namespace dolphin
