#include "stalltrace/multi_trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Eigenvalues>

#include "stalltrace/box_tracker.hpp"
#include "stalltrace/road_mask.hpp"

namespace stalltrace {

double line_fit_error(std::span<const Point2> points) {
  if (points.size() < 2) throw LineFitError("line_fit_error: need at least 2 points");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const Point2& p : points) mean += Eigen::Vector2d(p.x, p.y);
  mean /= static_cast<double>(points.size());
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const Point2& p : points) {
    const Eigen::Vector2d d = Eigen::Vector2d(p.x, p.y) - mean;
    scatter += d * d.transpose();
  }
  scatter /= static_cast<double>(points.size());
  // The smallest eigenvalue of the scatter is the mean squared distance to the principal axis.
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter, Eigen::EigenvaluesOnly);
  return std::max(0.0, eig.eigenvalues()(0));
}

int TrajectoryWindow::interval_of(double t) const {
  const double rel = (t - start_s) / interval_s;
  const auto i = static_cast<long>(std::floor(rel + 1e-9));
  if (i < 0 || i >= static_cast<long>(intervals.size())) return -1;
  return static_cast<int>(i);
}

TrajectoryWindow build_window(std::span<const Track> tracks, double anchor_s, double fps, const CurveParams& params) {
  TrajectoryWindow w;
  w.start_s = anchor_s - params.lead_s;
  w.interval_s = params.interval_s;
  w.intervals.resize(static_cast<std::size_t>(params.interval_count));
  for (const Track& t : tracks) {
    std::map<int, TrajectorySegment> segs;
    for (const TrackObservation& o : t.history) {
      const int i = w.interval_of(static_cast<double>(o.frame_idx) / fps);
      if (i < 0) continue;
      TrajectorySegment& s = segs[i];
      s.track_id = t.id;
      s.points.push_back(bbox_center(o.bbox));
      s.mean_box_area += o.bbox.area();
    }
    for (auto& [i, s] : segs) {
      s.mean_box_area /= static_cast<double>(s.points.size());
      w.intervals[static_cast<std::size_t>(i)].push_back(std::move(s));
    }
  }
  return w;
}

namespace {

bool mostly_on_road(const TrajectorySegment& s, const RoadMask& road_mask) {
  const auto on = std::count_if(s.points.begin(), s.points.end(), [&](const Point2& p) { return road_mask.contains(p); });
  return 2 * static_cast<std::size_t>(on) >= s.points.size();
}

}  // namespace

std::vector<OfftrackFlag> offtrack_filter(const TrajectoryWindow& window, const RoadMask& road_mask,
                                          const CurveParams& params) {
  std::map<int, std::vector<int>> hits;
  for (std::size_t i = 0; i < window.intervals.size(); ++i) {
    for (const TrajectorySegment& s : window.intervals[i]) {
      if (static_cast<int>(s.points.size()) < params.min_traj_points) continue;
      if (s.mean_box_area < params.offtrack_area_thresh) continue;
      if (mostly_on_road(s, road_mask)) continue;
      if (line_fit_error(s.points) <= params.offtrack_error_thresh) continue;
      hits[s.track_id].push_back(static_cast<int>(i));
    }
  }
  std::vector<OfftrackFlag> out;
  for (auto& [id, intervals] : hits) {
    if (static_cast<int>(intervals.size()) >= params.offtrack_min_freq) out.push_back({id, std::move(intervals)});
  }
  return out;
}

std::vector<int> count_abnormal_curves(const TrajectoryWindow& window, const CurveParams& params,
                                       const RoadMask& road_mask) {
  std::vector<int> n(window.intervals.size(), 0);
  for (std::size_t i = 0; i < window.intervals.size(); ++i) {
    for (const TrajectorySegment& s : window.intervals[i]) {
      if (static_cast<int>(s.points.size()) < params.min_traj_points) continue;
      if (!mostly_on_road(s, road_mask)) continue;
      if (line_fit_error(s.points) > params.fit_error_thresh) ++n[i];
    }
  }
  for (const OfftrackFlag& f : offtrack_filter(window, road_mask, params)) {
    for (int i : f.intervals) ++n[static_cast<std::size_t>(i)];
  }
  return n;
}

std::optional<int> locate_crash_interval(std::span<const int> n_series, const CurveParams& params) {
  if (n_series.empty()) return std::nullopt;
  const auto max_it = std::max_element(n_series.begin(), n_series.end());  // first maximum
  const int peak = *max_it;
  if (peak < params.peak_min) return std::nullopt;
  if (std::all_of(n_series.begin(), n_series.end(), [&](int v) { return v == peak; })) return std::nullopt;
  // Baseline: median of the other nonzero intervals, so an isolated spike is not its own baseline.
  std::vector<int> rest;
  for (auto it = n_series.begin(); it != n_series.end(); ++it)
    if (it != max_it && *it > 0) rest.push_back(*it);
  std::sort(rest.begin(), rest.end());
  const std::size_t k = rest.size();
  const double median = k == 0 ? 0.0 : k % 2 ? rest[k / 2] : 0.5 * (rest[k / 2 - 1] + rest[k / 2]);
  if (peak < params.platform_ratio * median) return std::nullopt;
  return static_cast<int>(max_it - n_series.begin());
}

TrajectoryAnalysis analyze_trajectories(std::span<const Track> tracks, const RoadMask& road_mask, double anchor_s,
                                        double fps, const CurveParams& params) {
  const TrajectoryWindow w = build_window(tracks, anchor_s, fps, params);
  TrajectoryAnalysis a;
  a.window_start_s = w.start_s;
  a.n_series = count_abnormal_curves(w, params, road_mask);
  a.crash_interval = locate_crash_interval(a.n_series, params);
  a.offtrack_count = offtrack_filter(w, road_mask, params).size();
  return a;
}

}  // namespace stalltrace
