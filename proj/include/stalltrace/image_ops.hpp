#pragma once

#include <vector>

#include "stalltrace/image.hpp"

namespace stalltrace {

struct Component {
  int label = 0;
  long area = 0;
  PixelRect bounds;
};

/// 8-connected labelling of nonzero pixels. Labels start at 1; 0 is background.
struct Labeling {
  ImageI labels;
  std::vector<Component> components;
};

Labeling label_components(const Mask& mask);

/// Binary dilation with a kernel_size x kernel_size square; pixels outside the image count as unset.
Mask dilate(const Mask& mask, int kernel_size, int iterations = 1);
/// Binary erosion with a square kernel; pixels outside the image count as set.
Mask erode(const Mask& mask, int kernel_size, int iterations = 1);

/// Mean over a (2r+1)^2 window, clamped at the border (window shrinks).
ImageD box_mean(const ImageD& img, int radius);

}  // namespace stalltrace
