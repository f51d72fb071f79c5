#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stalltrace/core.hpp"
#include "stalltrace/image.hpp"

namespace stalltrace {

class RoadMask;

struct PixelTrackerParams {
  double min_abnormal_duration_s = 60.0;
  double suspicious_duration_s = 40.0;
  /// Coverage gap tolerated before a pixel's counters reset.
  double miss_tolerance_s = 2.0;
  /// Detections scoring below this do not count as coverage.
  double score_floor = 0.3;

  void validate() const;
};

enum class PixelState : std::uint8_t { normal = 0, suspicious = 1, anomalous = 2 };

/// The six per-pixel spatio-temporal matrices.
struct PixelStateGrid {
  ImageI detected;    // consecutive covered updates
  ImageI undetected;  // consecutive uncovered updates
  ImageU8 state;      // PixelState
  ImageF score;       // running mean of covering detection scores
  ImageI start;       // frame where the current coverage run began, -1 if none
  ImageI end;         // last covered frame, -1 if none

  PixelStateGrid(int height, int width);
  [[nodiscard]] int height() const { return static_cast<int>(state.rows()); }
  [[nodiscard]] int width() const { return static_cast<int>(state.cols()); }
};

/// One background-stream update; `fps` converts frame gaps to seconds.
void pixel_update(PixelStateGrid& grid, std::span<const Detection> detections, std::int64_t frame_idx,
                  const PixelTrackerParams& params, double fps);

/// Anomalous connected regions touching the road mask. Each event takes the detection box that best
/// overlaps the region's bounding rectangle (or the rectangle itself when none overlaps).
std::vector<AnomalyEvent> extract_pixel_anomalies(const PixelStateGrid& grid, const RoadMask& road_mask,
                                                  std::span<const Detection> recent_detections, double fps,
                                                  const std::string& video_id);

}  // namespace stalltrace
