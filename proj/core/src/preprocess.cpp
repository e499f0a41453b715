#include "dolphin/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace dolphin {

namespace {

int round_half_up(double v) { return int(std::floor(v + 0.5)); }

// Bilinear resample with pixel-center alignment.
PageImage resize_bilinear(const PageImage& src, int out_w, int out_h) {
  PageImage out(out_w, out_h, src.channels);
  const double sx = double(src.width) / out_w;
  const double sy = double(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, double(src.height - 1));
    const int y0 = int(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, double(src.width - 1));
      const int x0 = int(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(x0, y0, c) * (1 - wx) + src.at(x1, y0, c) * wx;
        const double bot = src.at(x0, y1, c) * (1 - wx) + src.at(x1, y1, c) * wx;
        out.at(x, y, c) = uint8_t(std::clamp(round_half_up(top * (1 - wy) + bot * wy), 0, 255));
      }
    }
  }
  return out;
}

}  // namespace

std::pair<PageImage, FrameTransform> resize_pad(const PageImage& image, int frame_size) {
  if (image.width < 1 || image.height < 1 || image.empty())
    throw DegenerateImage("resize_pad: empty image");
  if (frame_size < 8) throw DegenerateImage("resize_pad: frame_size < 8");

  // Never magnify: small sources are pasted at native scale so rendered
  // content keeps identical pixel geometry in every view; only sources
  // larger than the frame are shrunk.
  const int longer = std::max(image.width, image.height);
  const double scale = longer <= frame_size ? 1.0 : double(frame_size) / longer;
  const int new_w = std::max(1, round_half_up(image.width * scale));
  const int new_h = std::max(1, round_half_up(image.height * scale));

  FrameTransform t;
  t.scale = scale;
  t.frame_size = frame_size;
  t.pad_right = frame_size - new_w;
  t.pad_bottom = frame_size - new_h;
  t.src_width = image.width;
  t.src_height = image.height;

  PageImage frame(frame_size, frame_size, image.channels, 255);
  PageImage resized = (new_w == image.width && new_h == image.height)
                          ? image
                          : resize_bilinear(image, new_w, new_h);
  for (int y = 0; y < new_h; ++y)
    std::copy_n(&resized.data[size_t(y) * new_w * resized.channels],
                size_t(new_w) * resized.channels,
                &frame.data[size_t(y) * frame_size * frame.channels]);
  return {std::move(frame), t};
}

BoundingBox to_model_frame(const SrcRect& b, const FrameTransform& t) {
  BoundingBox out;
  out.x1 = round_half_up(b.x1 * t.scale);
  out.y1 = round_half_up(b.y1 * t.scale);
  out.x2 = round_half_up(b.x2 * t.scale);
  out.y2 = round_half_up(b.y2 * t.scale);
  out.x1 = std::clamp(out.x1, 0, t.content_width());
  out.x2 = std::clamp(out.x2, 0, t.content_width());
  out.y1 = std::clamp(out.y1, 0, t.content_height());
  out.y2 = std::clamp(out.y2, 0, t.content_height());
  if (out.x1 >= out.x2 || out.y1 >= out.y2)
    throw EmptyAfterQuantization("box collapsed to zero area after quantization");
  return out;
}

SrcRect from_model_frame(const BoundingBox& b, const FrameTransform& t) {
  SrcRect out;
  out.x1 = std::clamp(round_half_up(b.x1 / t.scale), 0, t.src_width);
  out.y1 = std::clamp(round_half_up(b.y1 / t.scale), 0, t.src_height);
  out.x2 = std::clamp(round_half_up(b.x2 / t.scale), 0, t.src_width);
  out.y2 = std::clamp(round_half_up(b.y2 / t.scale), 0, t.src_height);
  return out;
}

std::pair<PageImage, FrameTransform> crop_element(const PageImage& page,
                                                  const FrameTransform& t,
                                                  const BoundingBox& bbox) {
  if (!bbox.valid(t.frame_size))
    throw OutOfBounds("crop_element: invalid model-frame box");
  // allow 1 source pixel of over-reach before declaring the box bad
  const int over_x = round_half_up(bbox.x2 / t.scale) - page.width;
  const int over_y = round_half_up(bbox.y2 / t.scale) - page.height;
  if (over_x > 1 || over_y > 1)
    throw OutOfBounds("crop_element: box exceeds the original image");

  SrcRect r = from_model_frame(bbox, t);
  if (r.x1 >= r.x2 || r.y1 >= r.y2)
    throw OutOfBounds("crop_element: degenerate back-projected box");

  PageImage crop(r.x2 - r.x1, r.y2 - r.y1, page.channels);
  for (int y = r.y1; y < r.y2; ++y)
    std::copy_n(&page.data[(size_t(y) * page.width + r.x1) * page.channels],
                size_t(r.x2 - r.x1) * page.channels,
                &crop.data[size_t(y - r.y1) * crop.width * crop.channels]);
  return resize_pad(crop, t.frame_size);
}

}  // namespace dolphin
