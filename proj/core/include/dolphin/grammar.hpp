// Tokenizer and the layout-sequence markup.
//
// Layout markup is one element per line, "tag<TAB>x1,y1,x2,y2", lines in
// reading order. The spotting variant appends "<TAB>text" with tag "line".
// The vocabulary is character-level for content plus whole-word tokens for
// element tags and a fixed set of HTML/LaTeX markup strings.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dolphin/types.hpp"

namespace dolphin {

using TokenId = int32_t;

constexpr TokenId kBos = 0;
constexpr TokenId kEos = 1;
constexpr TokenId kPad = 2;
constexpr TokenId kSep = 3;

struct UntokenizableInput : std::runtime_error {
  size_t offset;
  UntokenizableInput(size_t off, const std::string& what)
      : std::runtime_error(what), offset(off) {}
};

class Vocabulary {
 public:
  // The fixed built-in vocabulary (specials, tags, printable ASCII,
  // markup tokens). Deterministic order.
  static Vocabulary builtin();
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int size() const { return int(tokens_.size()); }
  const std::string& token_of(TokenId id) const { return tokens_.at(size_t(id)); }
  TokenId id_of(const std::string& token) const;

  // Greedy longest-match tokenization, wrapped in BOS/EOS. Specials are
  // never produced from text. Throws UntokenizableInput at the first byte
  // that matches nothing.
  std::vector<TokenId> encode_text(const std::string& s) const;
  // Concatenates surface forms; specials contribute nothing.
  std::string decode_tokens(const std::vector<TokenId>& ids) const;

  // One token per line, id = line number.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  std::string serialize() const;

 private:
  Vocabulary() = default;
  void build_index();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::vector<TokenId>> by_first_byte_;  // longest-first per lead byte
};

enum class WarningKind : uint8_t { MalformedLine, InvalidBox };

struct ParseWarning {
  WarningKind kind;
  int line_no;  // 1-based
  std::string detail;
};

std::string to_string(const ParseWarning& w);

// Canonical text serialization of a layout sequence.
std::string serialize_layout(const LayoutSequence& seq);

// Best-effort inverse: malformed lines are skipped with a warning, boxes
// violating the frame invariants are dropped with a warning. Never throws
// on arbitrary input.
LayoutSequence parse_layout(const std::string& text, int frame_size,
                            std::vector<ParseWarning>* warnings = nullptr);

// Text-spotting output: "line" records carrying a box and a transcript.
struct SpottedLine {
  BoundingBox bbox;
  std::string text;
  bool operator==(const SpottedLine&) const = default;
};

std::string serialize_spotting(const std::vector<SpottedLine>& lines);
std::vector<SpottedLine> parse_spotting(const std::string& text, int frame_size,
                                        std::vector<ParseWarning>* warnings = nullptr);

}  // namespace dolphin
