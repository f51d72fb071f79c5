#pragma once

#include <cstdint>
#include <vector>

#include "stalltrace/core.hpp"
#include "stalltrace/image.hpp"

namespace stalltrace {

/// Stand-in for an external vehicle detector on synthetic footage: bright blobs become boxes.
struct RectDetectorParams {
  int intensity_threshold = 185;
  long min_area = 150;
};

/// Thresholds at `intensity_threshold`, labels 8-connected blobs and boxes each blob of at least
/// `min_area` pixels. Score is the blob's fill ratio within its box.
std::vector<Detection> detect_rectangles(const ImageU8& img, std::int64_t frame_idx,
                                         const RectDetectorParams& params = {});

}  // namespace stalltrace
