#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dolphin {

struct DegenerateImage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ImageIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Row-major 8-bit raster, 1 (gray) or 3 (RGB) channels.
struct PageImage {
  int width = 0, height = 0, channels = 1;
  std::vector<uint8_t> data;

  PageImage() = default;
  PageImage(int w, int h, int c, uint8_t fill = 255)
      : width(w), height(h), channels(c),
        data(size_t(w) * h * c, fill) {
    if (w < 1 || h < 1) throw DegenerateImage("image must be at least 1x1");
  }

  uint8_t& at(int x, int y, int c = 0) {
    return data[(size_t(y) * width + x) * channels + c];
  }
  uint8_t at(int x, int y, int c = 0) const {
    return data[(size_t(y) * width + x) * channels + c];
  }
  bool empty() const { return data.empty(); }
  bool operator==(const PageImage&) const = default;

  PageImage to_gray() const;
};

// PNG plus binary PGM/PPM, dispatched on extension / magic bytes.
PageImage read_image(const std::string& path);
void write_png(const std::string& path, const PageImage& img);
void write_pnm(const std::string& path, const PageImage& img);

}  // namespace dolphin
