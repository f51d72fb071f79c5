#include "stalltrace/flow_tracer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "stalltrace/ingest.hpp"

namespace stalltrace {

void FlowParams::validate() const {
  if (points < knn_k + 1) throw Error("flow: points must be >= knn_k + 1");
  if (trace_len < window_len) throw Error("flow: trace_len must be >= window_len");
  if (window_len < 2 || neighbor_len < 1) throw Error("flow: window_len >= 2 and neighbor_len >= 1 required");
  if (density_thresh <= 0 || scale <= 0) throw Error("flow: density_thresh and scale must be positive");
}

VelocitySeries backward_trace(const BBox& box, std::int64_t stop_frame, const FrameSource& frames,
                              const FlowParams& params) {
  const VideoManifest& m = frames.manifest();
  stop_frame = std::clamp<std::int64_t>(stop_frame, 0, m.frame_count - 1);
  const ImageU8 stop_img = frames.gray(stop_frame);
  SeedParams seed;
  seed.count = params.points;
  seed.min_distance = params.seed_min_distance;
  seed.min_response = params.lk.min_eig;
  std::vector<FlowPoint> pts = seed_points(box, stop_img, seed);
  VelocitySeries out;
  if (pts.empty()) return out;

  FlowPyramid later(stop_img, params.lk.levels);
  Eigen::MatrixX2d vel(static_cast<Eigen::Index>(pts.size()), 2);
  for (int s = 1; s <= params.trace_len && stop_frame - s >= 0; ++s) {
    const std::int64_t f = stop_frame - s;
    FlowPyramid earlier(frames.gray(f), params.lk.levels);
    std::vector<FlowPoint> next = lk_step(later, earlier, pts, params.lk);

    Eigen::Index n = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (pts[i].tracked && next[i].tracked) vel.row(n++) = (pts[i].pos - next[i].pos).transpose();
    }
    if (n == 0) break;
    const auto live = vel.topRows(n);
    const KnnFilterResult keep = knn_outlier_filter(live, params.knn_k, params.density_thresh);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    int kept = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (keep.inlier[static_cast<std::size_t>(i)]) {
        mean += live.row(i).transpose();
        ++kept;
      }
    }
    if (kept == 0) {
      mean = live.colwise().mean().transpose();
    } else {
      mean /= kept;
    }
    out.frame.push_back(f + 1);
    out.u.push_back(mean.x());
    out.v.push_back(mean.y());
    out.m.push_back(mean.norm());
    out.active.push_back(static_cast<int>(n));

    pts = std::move(next);
    later = std::move(earlier);
  }
  std::reverse(out.frame.begin(), out.frame.end());
  std::reverse(out.u.begin(), out.u.end());
  std::reverse(out.v.begin(), out.v.end());
  std::reverse(out.m.begin(), out.m.end());
  std::reverse(out.active.begin(), out.active.end());
  return out;
}

std::vector<double> peak_suppress(std::span<const double> series, int neighbor_len, std::span<const int> ranks) {
  if (neighbor_len < 1) throw Error("peak_suppress: neighbor_len must be >= 1");
  std::vector<double> out(series.begin(), series.end());
  std::vector<std::size_t> order(series.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return series[a] > series[b]; });
  const auto n = static_cast<std::ptrdiff_t>(series.size());
  for (int r : ranks) {
    if (r < 0 || r >= n) continue;
    const auto i = static_cast<std::ptrdiff_t>(order[static_cast<std::size_t>(r)]);
    bool isolated = false;
    bool dominated = true;
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - neighbor_len); j <= std::min(n - 1, i + neighbor_len); ++j) {
      if (j == i) continue;
      isolated = true;
      if (!(series[static_cast<std::size_t>(j)] < series[static_cast<std::size_t>(i)])) dominated = false;
    }
    if (isolated && dominated) out[static_cast<std::size_t>(i)] = 0.0;
  }
  return out;
}

namespace {

double median_of(std::span<const double> v) {
  std::vector<double> c(v.begin(), v.end());
  std::nth_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(c.size() / 2), c.end());
  return c[c.size() / 2];
}

// A jerk is a transient: the motion level on both sides of the outlier run must agree. A vehicle
// coming to rest leaves a level shift instead, which is the stop itself and not a crash.
bool settles_back(std::span<const double> series, std::size_t begin, std::size_t end, std::size_t span) {
  span = std::max<std::size_t>(span, 1);
  if (begin == 0 || end >= series.size()) return false;
  const double before = median_of(series.subspan(begin - std::min(begin, span), std::min(begin, span)));
  const double after = median_of(series.subspan(end, std::min(series.size() - end, span)));
  return std::abs(before - after) <= 0.5 * std::max(before, after);
}

}  // namespace

std::optional<std::size_t> moving_window_detect(std::span<const double> series, int window_len, double scale,
                                                double drastic_ratio) {
  if (window_len < 1 || series.size() < static_cast<std::size_t>(window_len)) {
    throw Error("moving_window_detect: series shorter than the window");
  }
  const std::size_t n = series.size(), w = static_cast<std::size_t>(window_len);
  std::vector<char> outlier(n, 0), drastic(n, 0);
  const Eigen::Map<const Eigen::ArrayXd> all(series.data(), static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s + w <= n; ++s) {
    const auto win = all.segment(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(w));
    const double mean = win.mean();
    const double mae = (win - mean).abs().mean();
    const double sd = std::sqrt((win - mean).square().mean());
    const double band = mae + scale * sd;
    for (std::size_t i = s; i < s + w; ++i) {
      if (std::abs(series[i] - mean) <= band) continue;
      outlier[i] = 1;
      if (mean > 0.0 && series[i] >= drastic_ratio * mean) drastic[i] = 1;
    }
  }
  const std::size_t max_run = w / 4;
  for (std::size_t i = 0; i < n;) {
    if (!outlier[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    bool any_drastic = false;
    for (; j < n && outlier[j]; ++j) any_drastic = any_drastic || drastic[j];
    if (any_drastic && j - i <= max_run && settles_back(series, i, j, max_run)) return i;
    i = j;
  }
  return std::nullopt;
}

std::optional<std::int64_t> locate_crash_frame(const VelocitySeries& series, const FlowParams& params) {
  if (series.size() < static_cast<std::size_t>(params.window_len)) return std::nullopt;
  const std::vector<double> cleaned = peak_suppress(series.m, params.neighbor_len, params.suppress_ranks);
  const auto idx = moving_window_detect(cleaned, params.window_len, params.scale, params.drastic_ratio);
  if (!idx) return std::nullopt;
  return series.frame[*idx];
}

void write_velocity_series(const std::filesystem::path& path, const VelocitySeries& series) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "frame\tu\tv\tm\tactive\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    os << series.frame[i] << '\t' << format_double(series.u[i]) << '\t' << format_double(series.v[i]) << '\t'
       << format_double(series.m[i]) << '\t' << series.active[i] << '\n';
  }
}

}  // namespace stalltrace
