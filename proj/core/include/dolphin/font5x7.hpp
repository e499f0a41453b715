// Built-in 5x7 bitmap font used by the synthetic renderer. Pixel-exact and
// platform independent.
#pragma once

#include <cstdint>
#include <string>

#include "dolphin/image.hpp"

namespace dolphin::font {

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;

bool has_glyph(char c);
// 7 rows, bits 4..0 = columns left to right. Unknown chars get a box.
const uint8_t* glyph(char c);

// advance per char is (kGlyphW + 1) * scale
inline int advance(int scale) { return (kGlyphW + 1) * scale; }
inline int line_height(int scale) { return (kGlyphH + 2) * scale; }
int text_width(size_t n_chars, int scale);

void draw_text(PageImage& img, int x, int y, const std::string& text,
               int scale, uint8_t color);

}  // namespace dolphin::font
