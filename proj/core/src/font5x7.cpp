#include "dolphin/font5x7.hpp"

#include <array>
#include <cstring>

namespace dolphin::font {

namespace {

struct Glyph {
  char c;
  const char* rows[kGlyphH];  // '#' = ink
};

// clang-format off
constexpr Glyph kGlyphs[] = {
  {' ', {".....",".....",".....",".....",".....",".....","....."}},
  {'a', {".....",".....",".###.","....#",".####","#...#",".####"}},
  {'b', {"#....","#....","#.##.","##..#","#...#","#...#","####."}},
  {'c', {".....",".....",".###.","#....","#....","#...#",".###."}},
  {'d', {"....#","....#",".##.#","#..##","#...#","#...#",".####"}},
  {'e', {".....",".....",".###.","#...#","#####","#....",".###."}},
  {'f', {"..##.",".#..#",".#...","###..",".#...",".#...",".#..."}},
  {'g', {".....",".####","#...#",".####","....#","#...#",".###."}},
  {'h', {"#....","#....","#.##.","##..#","#...#","#...#","#...#"}},
  {'i', {"..#..",".....",".##..","..#..","..#..","..#..",".###."}},
  {'j', {"...#.",".....","...#.","...#.","...#.","#..#.",".##.."}},
  {'k', {"#....","#....","#..#.","#.#..","##...","#.#..","#..#."}},
  {'l', {".##..","..#..","..#..","..#..","..#..","..#..","..##."}},
  {'m', {".....",".....","##.#.","#.#.#","#.#.#","#.#.#","#.#.#"}},
  {'n', {".....",".....","#.##.","##..#","#...#","#...#","#...#"}},
  {'o', {".....",".....",".###.","#...#","#...#","#...#",".###."}},
  {'p', {".....","####.","#...#","#...#","####.","#....","#...."}},
  {'q', {".....",".####","#...#","#...#",".####","....#","....#"}},
  {'r', {".....",".....","#.##.","##..#","#....","#....","#...."}},
  {'s', {".....",".....",".####","#....",".###.","....#","####."}},
  {'t', {".#...",".#...","###..",".#...",".#...",".#..#","..##."}},
  {'u', {".....",".....","#...#","#...#","#...#","#..##",".##.#"}},
  {'v', {".....",".....","#...#","#...#","#...#",".#.#.","..#.."}},
  {'w', {".....",".....","#...#","#.#.#","#.#.#","#.#.#",".#.#."}},
  {'x', {".....",".....","#...#",".#.#.","..#..",".#.#.","#...#"}},
  {'y', {".....","#...#","#...#",".####","....#","#...#",".###."}},
  {'z', {".....",".....","#####","...#.","..#..",".#...","#####"}},
  {'0', {".###.","#...#","#..##","#.#.#","##..#","#...#",".###."}},
  {'1', {"..#..",".##..","..#..","..#..","..#..","..#..",".###."}},
  {'2', {".###.","#...#","....#","...#.","..#..",".#...","#####"}},
  {'3', {".###.","#...#","....#","..##.","....#","#...#",".###."}},
  {'4', {"...#.","..##.",".#.#.","#..#.","#####","...#.","...#."}},
  {'5', {"#####","#....","####.","....#","....#","#...#",".###."}},
  {'6', {"..##.",".#...","#....","####.","#...#","#...#",".###."}},
  {'7', {"#####","....#","...#.","..#..",".#...",".#...",".#..."}},
  {'8', {".###.","#...#","#...#",".###.","#...#","#...#",".###."}},
  {'9', {".###.","#...#","#...#",".####","....#","...#.",".##.."}},
  {'.', {".....",".....",".....",".....",".....","..##.","..##."}},
  {',', {".....",".....",".....",".....","..##.","..#..",".#..."}},
  {'-', {".....",".....",".....","#####",".....",".....","....."}},
  {'+', {".....","..#..","..#..","#####","..#..","..#..","....."}},
  {'=', {".....",".....","#####",".....","#####",".....","....."}},
  {'(', {"...#.","..#..",".#...",".#...",".#...","..#..","...#."}},
  {')', {".#...","..#..","...#.","...#.","...#.","..#..",".#..."}},
  {'/', {"....#","....#","...#.","..#..",".#...","#....","#...."}},
  {':', {".....","..##.","..##.",".....","..##.","..##.","....."}},
  {';', {".....","..##.","..##.",".....","..##.","..#..",".#..."}},
  {'$', {"..#..",".####","#.#..",".###.","..#.#","####.","..#.."}},
  {'\\',{"#....","#....",".#...","..#..","...#.","....#","....#"}},
  {'{', {"...##","..#..","..#..",".#...","..#..","..#..","...##"}},
  {'}', {"##...","..#..","..#..","...#.","..#..","..#..","##..."}},
  {'^', {"..#..",".#.#.","#...#",".....",".....",".....","....."}},
  {'_', {".....",".....",".....",".....",".....",".....","#####"}},
  {'<', {"...#.","..#..",".#...","#....",".#...","..#..","...#."}},
  {'>', {".#...","..#..","...#.","....#","...#.","..#..",".#..."}},
  {'\'',{"..#..","..#..",".#...",".....",".....",".....","....."}},
  {'"', {".#.#.",".#.#.",".....",".....",".....",".....","....."}},
  {'!', {"..#..","..#..","..#..","..#..","..#..",".....","..#.."}},
  {'?', {".###.","#...#","....#","...#.","..#..",".....","..#.."}},
  {'*', {".....","#.#.#",".###.","#####",".###.","#.#.#","....."}},
  {'#', {".#.#.","#####",".#.#.",".#.#.",".#.#.","#####",".#.#."}},
  {'[', {"..###","..#..","..#..","..#..","..#..","..#..","..###"}},
  {']', {"###..","..#..","..#..","..#..","..#..","..#..","###.."}},
};
// clang-format on

constexpr uint8_t kFallback[kGlyphH] = {0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F};

struct FontTable {
  std::array<std::array<uint8_t, kGlyphH>, 128> rows{};
  std::array<bool, 128> present{};

  FontTable() {
    for (const auto& g : kGlyphs) {
      auto& out = rows[size_t(uint8_t(g.c))];
      for (int r = 0; r < kGlyphH; ++r) {
        uint8_t bits = 0;
        for (int c = 0; c < kGlyphW; ++c)
          if (g.rows[r][c] == '#') bits |= uint8_t(1u << (kGlyphW - 1 - c));
        out[size_t(r)] = bits;
      }
      present[size_t(uint8_t(g.c))] = true;
    }
  }
};

const FontTable& table() {
  static const FontTable t;
  return t;
}

}  // namespace

bool has_glyph(char c) {
  return uint8_t(c) < 128 && table().present[size_t(uint8_t(c))];
}

const uint8_t* glyph(char c) {
  if (!has_glyph(c)) return kFallback;
  return table().rows[size_t(uint8_t(c))].data();
}

int text_width(size_t n_chars, int scale) {
  if (n_chars == 0) return 0;
  return int(n_chars) * advance(scale) - scale;  // no trailing gap
}

void draw_text(PageImage& img, int x, int y, const std::string& text,
               int scale, uint8_t color) {
  int cx = x;
  for (char ch : text) {
    const uint8_t* g = glyph(ch);
    for (int r = 0; r < kGlyphH; ++r) {
      for (int c = 0; c < kGlyphW; ++c) {
        if (!(g[r] & (1u << (kGlyphW - 1 - c)))) continue;
        for (int sy = 0; sy < scale; ++sy) {
          for (int sx = 0; sx < scale; ++sx) {
            const int px = cx + c * scale + sx, py = y + r * scale + sy;
            if (px >= 0 && px < img.width && py >= 0 && py < img.height)
              for (int ch2 = 0; ch2 < img.channels; ++ch2) img.at(px, py, ch2) = color;
          }
        }
      }
    }
    cx += advance(scale);
  }
}

}  // namespace dolphin::font
