#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "stalltrace/optical_flow.hpp"

namespace stalltrace {

class FrameSource;

struct FlowParams {
  int points = 50;
  int trace_len = 390;
  int knn_k = 6;
  double density_thresh = 6.6;
  std::vector<int> suppress_ranks{0, 2, 4, 6};
  int neighbor_len = 5;
  int window_len = 60;
  double scale = 2.5;
  /// An outlier run is a crash when it reaches this multiple of the window mean and spans at most
  /// window_len / 4 frames.
  double drastic_ratio = 2.0;
  LkParams lk;
  double seed_min_distance = 3.0;

  void validate() const;
};

struct KnnFilterResult {
  std::vector<char> inlier;
  /// False when there were too few points to filter; every point then passes.
  bool filtered = true;
};

/// Drops rows whose mean distance to their k nearest other rows exceeds `density_thresh`.
template <typename Derived>
KnnFilterResult knn_outlier_filter(const Eigen::MatrixBase<Derived>& pts, int k, double density_thresh) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = pts.rows();
  KnnFilterResult res;
  res.inlier.assign(static_cast<std::size_t>(n), 1);
  if (k < 1 || n < k + 1) {
    res.filtered = false;
    return res;
  }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> p = pts;
  std::vector<double> d(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) d[m++] = static_cast<double>((p.row(i) - p.row(j)).norm());
    }
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    std::sort(d.begin(), d.begin() + k);
    double sum = 0.0;
    for (int q = 0; q < k; ++q) sum += d[static_cast<std::size_t>(q)];
    if (sum / k > density_thresh) res.inlier[static_cast<std::size_t>(i)] = 0;
  }
  return res;
}

/// Mean per-frame flow of the traced vehicle, chronological. Entry t describes motion from
/// frame[t] - 1 to frame[t].
struct VelocitySeries {
  std::vector<std::int64_t> frame;
  std::vector<double> u, v, m;
  std::vector<int> active;

  [[nodiscard]] std::size_t size() const { return m.size(); }
  [[nodiscard]] bool empty() const { return m.empty(); }
};

/// Seeds corners in `box` at `stop_frame` and follows them toward earlier frames for up to trace_len
/// steps. Returns an empty series when nothing could be seeded.
VelocitySeries backward_trace(const BBox& box, std::int64_t stop_frame, const FrameSource& frames,
                              const FlowParams& params);

/// Zeroes the values at the given descending ranks when every neighbour within L is strictly smaller.
std::vector<double> peak_suppress(std::span<const double> series, int neighbor_len, std::span<const int> ranks);

/// Index of the first frame of the earliest drastic outlier run, if any. A run counts only when it is
/// short (at most a quarter window) and the series returns to its earlier level after it.
std::optional<std::size_t> moving_window_detect(std::span<const double> series, int window_len, double scale,
                                                double drastic_ratio = 2.0);

/// Crash frame from a traced series: suppression then window detection.
std::optional<std::int64_t> locate_crash_frame(const VelocitySeries& series, const FlowParams& params);

void write_velocity_series(const std::filesystem::path& path, const VelocitySeries& series);

}  // namespace stalltrace
