// Geometry between original images and the padded square model frame.
#pragma once

#include "dolphin/image.hpp"
#include "dolphin/types.hpp"

namespace dolphin {

struct EmptyAfterQuantization : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutOfBounds : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rectangle in original-image pixels (half-open on neither side: x2/y2 are
// exclusive edges like BoundingBox).
struct SrcRect {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const SrcRect&) const = default;
};

// Maps original-image coordinates into the frame_size x frame_size model
// frame: longer edge scaled to frame_size, content anchored top-left,
// white padding on the right or bottom.
struct FrameTransform {
  double scale = 1.0;
  int pad_right = 0;
  int pad_bottom = 0;
  int frame_size = kDefaultFrameSize;
  int src_width = 0;
  int src_height = 0;

  int content_width() const { return frame_size - pad_right; }
  int content_height() const { return frame_size - pad_bottom; }
};

// Places the image in a square frame with white right/bottom padding.
// Sources larger than the frame are shrunk (aspect-preserving, bilinear);
// smaller sources are pasted at native scale, never magnified, so rendered
// content keeps identical pixel geometry in every view.
std::pair<PageImage, FrameTransform> resize_pad(const PageImage& image,
                                                int frame_size);

// Source-pixel rectangle -> model-frame box, round half up, clamped to the
// content region. Throws EmptyAfterQuantization if the box collapses.
BoundingBox to_model_frame(const SrcRect& bbox_src, const FrameTransform& t);

// Inverse mapping; exact up to quantization (within ~1/scale pixels).
SrcRect from_model_frame(const BoundingBox& bbox, const FrameTransform& t);

// Back-projects bbox to the original image, crops, and resize_pads the crop
// to t.frame_size. Over-reach beyond 1 source pixel is OutOfBounds;
// anything within that tolerance is clamped.
std::pair<PageImage, FrameTransform> crop_element(const PageImage& page,
                                                  const FrameTransform& t,
                                                  const BoundingBox& bbox);

}  // namespace dolphin
