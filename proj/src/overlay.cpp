#include "stalltrace/overlay.hpp"

#include <algorithm>
#include <cmath>

namespace stalltrace {

namespace {

constexpr Rgb kTrack{40, 220, 60};
constexpr Rgb kEvent{240, 30, 30};
constexpr Rgb kInk{20, 20, 20};
constexpr Rgb kAxis{150, 150, 150};

}  // namespace

RgbCanvas::RgbCanvas(const ImageU8& gray) {
  img_.channels = 3;
  img_.pixels.resize(gray.rows(), gray.cols() * 3);
  for (Eigen::Index y = 0; y < gray.rows(); ++y) {
    for (Eigen::Index x = 0; x < gray.cols(); ++x) {
      for (int c = 0; c < 3; ++c) img_.pixels(y, 3 * x + c) = gray(y, x);
    }
  }
}

RgbCanvas::RgbCanvas(int height, int width, Rgb fill) {
  img_.channels = 3;
  img_.pixels.resize(height, width * 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) set(x, y, fill);
  }
}

void RgbCanvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width() || y >= height()) return;
  for (int k = 0; k < 3; ++k) img_.pixels(y, 3 * x + k) = c[static_cast<std::size_t>(k)];
}

void RgbCanvas::line(double x0, double y0, double x1, double y1, Rgb c) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    set(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

void RgbCanvas::rect(const BBox& b, Rgb c, int thickness) {
  for (int k = 0; k < thickness; ++k) {
    const double x1 = b.x1 + k, y1 = b.y1 + k, x2 = b.x2 - 1 - k, y2 = b.y2 - 1 - k;
    line(x1, y1, x2, y1, c);
    line(x1, y2, x2, y2, c);
    line(x1, y1, x1, y2, c);
    line(x2, y1, x2, y2, c);
  }
}

void write_velocity_plot(const std::filesystem::path& path, const VelocitySeries& series,
                         std::optional<std::int64_t> marker) {
  constexpr int W = 640, H = 240, pad = 20;
  RgbCanvas c(H, W, Rgb{255, 255, 255});
  c.line(pad, H - pad, W - pad, H - pad, kAxis);
  c.line(pad, pad, pad, H - pad, kAxis);
  if (!series.empty()) {
    const double top = std::max(1e-9, *std::max_element(series.m.begin(), series.m.end()));
    const double n = static_cast<double>(std::max<std::size_t>(series.size() - 1, 1));
    auto px = [&](std::size_t i) { return pad + (W - 2.0 * pad) * static_cast<double>(i) / n; };
    auto py = [&](double v) { return (H - pad) - (H - 2.0 * pad) * v / top; };
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (marker && series.frame[i] == *marker) c.line(px(i), pad, px(i), H - pad, kEvent);
    }
    for (std::size_t i = 1; i < series.size(); ++i) c.line(px(i - 1), py(series.m[i - 1]), px(i), py(series.m[i]), kInk);
  }
  write_image(path, c.image());
}

void emit_overlays(const FrameSource& frames, std::span<const AnomalyEvent> events, std::span<const Track> tracks,
                   const std::filesystem::path& dir, const OverlayOptions& options,
                   std::span<const DynamicTrace> traces) {
  const VideoManifest& m = frames.manifest();
  std::filesystem::create_directories(dir);
  const std::int64_t last = options.last < 0 ? m.frame_count - 1 : std::min(options.last, m.frame_count - 1);
  const std::int64_t stride = std::max<std::int64_t>(options.stride, 1);
  for (std::int64_t f = std::max<std::int64_t>(options.first, 0); f <= last; f += stride) {
    RgbCanvas canvas(frames.gray(f));
    for (const Track& t : tracks) {
      const auto upto = std::upper_bound(t.history.begin(), t.history.end(), f,
                                         [](std::int64_t v, const TrackObservation& o) { return v < o.frame_idx; });
      if (upto == t.history.begin()) continue;
      const auto from = upto - std::min<std::ptrdiff_t>(options.trail, upto - t.history.begin());
      if ((upto - 1)->frame_idx < f - options.trail) continue;
      for (auto it = from + 1; it < upto; ++it) {
        const Point2 a = bbox_center((it - 1)->bbox), b = bbox_center(it->bbox);
        canvas.line(a.x, a.y, b.x, b.y, kTrack);
      }
      if ((upto - 1)->frame_idx == f) canvas.rect((upto - 1)->bbox, kTrack);
    }
    for (const AnomalyEvent& e : events) {
      if (f >= e.start_time.to_frame(m.fps)) canvas.rect(e.bbox, kEvent, 2);
    }
    char name[40];
    std::snprintf(name, sizeof name, "overlay_%06lld.png", static_cast<long long>(f));
    write_image(dir / name, canvas.image());
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].branch != Branch::flow_refined) continue;
    VelocitySeries series;
    if (i < traces.size()) series = traces[i].flow;
    write_velocity_plot(dir / ("velocity_plot_" + std::to_string(i) + ".png"), series,
                        events[i].start_time.to_frame(m.fps));
  }
}

}  // namespace stalltrace
