#include "stalltrace/detector.hpp"

#include "stalltrace/image_ops.hpp"

namespace stalltrace {

std::vector<Detection> detect_rectangles(const ImageU8& img, std::int64_t frame_idx,
                                         const RectDetectorParams& params) {
  const Mask bright = (img.cast<int>() >= params.intensity_threshold).cast<std::uint8_t>();
  const Labeling lab = label_components(bright);
  std::vector<Detection> out;
  for (const Component& c : lab.components) {
    if (c.area < params.min_area) continue;
    const BBox box{static_cast<double>(c.bounds.x0), static_cast<double>(c.bounds.y0),
                   static_cast<double>(c.bounds.x1), static_cast<double>(c.bounds.y1)};
    out.push_back({frame_idx, box, static_cast<double>(c.area) / static_cast<double>(c.bounds.area())});
  }
  return out;
}

}  // namespace stalltrace
