#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <string_view>

#include "hierpose/image.hpp"

namespace hierpose::tools {

// 5x7 glyphs, one byte per row, low 5 bits used (bit 4 = leftmost).
inline const std::array<uint8_t, 7>* glyph(char c) {
  static const std::array<uint8_t, 7> digits[10] = {
      {14, 17, 19, 21, 25, 17, 14}, {4, 12, 4, 4, 4, 4, 14},   {14, 17, 1, 2, 4, 8, 31},
      {31, 2, 4, 2, 1, 17, 14},     {2, 6, 10, 18, 31, 2, 2},  {31, 16, 30, 1, 1, 17, 14},
      {6, 8, 16, 30, 17, 17, 14},   {31, 1, 2, 4, 8, 8, 8},    {14, 17, 17, 14, 17, 17, 14},
      {14, 17, 17, 15, 1, 2, 12}};
  static const std::array<uint8_t, 7> letters[26] = {
      {14, 17, 17, 31, 17, 17, 17}, {30, 17, 17, 30, 17, 17, 30}, {14, 17, 16, 16, 16, 17, 14},
      {28, 18, 17, 17, 17, 18, 28}, {31, 16, 16, 30, 16, 16, 31}, {31, 16, 16, 30, 16, 16, 16},
      {14, 17, 16, 23, 17, 17, 15}, {17, 17, 17, 31, 17, 17, 17}, {14, 4, 4, 4, 4, 4, 14},
      {7, 2, 2, 2, 2, 18, 12},      {17, 18, 20, 24, 20, 18, 17}, {16, 16, 16, 16, 16, 16, 31},
      {17, 27, 21, 21, 17, 17, 17}, {17, 17, 25, 21, 19, 17, 17}, {14, 17, 17, 17, 17, 17, 14},
      {30, 17, 17, 30, 16, 16, 16}, {14, 17, 17, 17, 21, 18, 13}, {30, 17, 17, 30, 20, 18, 17},
      {15, 16, 16, 14, 1, 1, 30},   {31, 4, 4, 4, 4, 4, 4},       {17, 17, 17, 17, 17, 17, 14},
      {17, 17, 17, 17, 17, 10, 4},  {17, 17, 17, 21, 21, 21, 10}, {17, 17, 10, 4, 10, 17, 17},
      {17, 17, 10, 4, 4, 4, 4},     {31, 1, 2, 4, 8, 16, 31}};
  static const std::array<uint8_t, 7> dash{0, 0, 0, 31, 0, 0, 0};
  static const std::array<uint8_t, 7> dot{0, 0, 0, 0, 0, 12, 12};
  static const std::array<uint8_t, 7> colon{0, 12, 12, 0, 12, 12, 0};
  static const std::array<uint8_t, 7> slash{1, 1, 2, 4, 8, 16, 16};
  if (c >= '0' && c <= '9') return &digits[c - '0'];
  if (std::isalpha(static_cast<unsigned char>(c))) return &letters[std::tolower(static_cast<unsigned char>(c)) - 'a'];
  if (c == '-' || c == '_') return &dash;
  if (c == '.') return &dot;
  if (c == ':') return &colon;
  if (c == '/') return &slash;
  return nullptr;
}

/// Draws text with its top-left corner at (x, y); clipped to the image.
inline void draw_text(GrayImage& img, int x, int y, std::string_view text, double value) {
  for (char c : text) {
    if (const auto* g = glyph(c)) {
      for (int r = 0; r < 7; ++r)
        for (int k = 0; k < 5; ++k) {
          if (!((*g)[r] >> (4 - k) & 1)) continue;
          const int px = x + k, py = y + r;
          if (px >= 0 && py >= 0 && px < img.width() && py < img.height()) img.at(px, py) = value;
        }
    }
    x += 6;
  }
}

}  // namespace hierpose::tools
