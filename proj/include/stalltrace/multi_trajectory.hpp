#pragma once

#include <optional>
#include <span>
#include <vector>

#include "stalltrace/core.hpp"

namespace stalltrace {

struct Track;
class RoadMask;

struct CurveParams {
  double fit_error_thresh = 30.0;
  int min_traj_points = 10;
  double offtrack_area_thresh = 40.0;
  double offtrack_error_thresh = 10.0;
  int offtrack_min_freq = 8;
  /// Peak/platform rule: the peak count must reach peak_min and platform_ratio x the series median.
  int peak_min = 2;
  double platform_ratio = 3.0;
  int interval_count = 26;
  double interval_s = 1.0;
  /// The window opens this long before the anchor time.
  double lead_s = 20.0;
};

class LineFitError : public Error {
 public:
  using Error::Error;
};

/// Orthogonal least-squares line fit; mean squared perpendicular distance to the best line.
double line_fit_error(std::span<const Point2> points);

/// One vehicle's centers inside one interval.
struct TrajectorySegment {
  int track_id = 0;
  std::vector<Point2> points;
  double mean_box_area = 0.0;
};

struct TrajectoryWindow {
  double start_s = 0.0;
  double interval_s = 1.0;
  std::vector<std::vector<TrajectorySegment>> intervals;

  /// Interval holding time t, or -1 outside the window.
  [[nodiscard]] int interval_of(double t) const;
};

TrajectoryWindow build_window(std::span<const Track> tracks, double anchor_s, double fps, const CurveParams& params);

struct OfftrackFlag {
  int track_id = 0;
  std::vector<int> intervals;
};

/// Tracks that repeatedly curve outside the road with a non-trivial box.
std::vector<OfftrackFlag> offtrack_filter(const TrajectoryWindow& window, const RoadMask& road_mask,
                                          const CurveParams& params);

/// Per-interval abnormal-curve counts; off-road segments are dropped, then flagged off-track
/// intervals are added back.
std::vector<int> count_abnormal_curves(const TrajectoryWindow& window, const CurveParams& params,
                                       const RoadMask& road_mask);

/// Earliest arg-max interval when it is a genuine peak rather than a platform.
std::optional<int> locate_crash_interval(std::span<const int> n_series, const CurveParams& params);

struct TrajectoryAnalysis {
  std::vector<int> n_series;
  std::optional<int> crash_interval;
  std::size_t offtrack_count = 0;
  double window_start_s = 0.0;
};

TrajectoryAnalysis analyze_trajectories(std::span<const Track> tracks, const RoadMask& road_mask, double anchor_s,
                                        double fps, const CurveParams& params);

}  // namespace stalltrace
