#include "stalltrace/pixel_tracker.hpp"

#include <algorithm>
#include <limits>

#include "stalltrace/image_ops.hpp"
#include "stalltrace/road_mask.hpp"

namespace stalltrace {

void PixelTrackerParams::validate() const {
  if (!(suspicious_duration_s < min_abnormal_duration_s)) {
    throw Error("pixel tracker: suspicious duration must be shorter than the abnormal duration");
  }
  if (miss_tolerance_s < 0 || score_floor < 0 || score_floor > 1) throw Error("pixel tracker: bad parameters");
}

PixelStateGrid::PixelStateGrid(int height, int width)
    : detected(ImageI::Zero(height, width)),
      undetected(ImageI::Zero(height, width)),
      state(ImageU8::Zero(height, width)),
      score(ImageF::Zero(height, width)),
      start(ImageI::Constant(height, width, -1)),
      end(ImageI::Constant(height, width, -1)) {}

void pixel_update(PixelStateGrid& grid, std::span<const Detection> detections, std::int64_t frame_idx,
                  const PixelTrackerParams& params, double fps) {
  const int h = grid.height();
  const int w = grid.width();
  // Best covering score per pixel; negative means uncovered.
  ImageF cover = ImageF::Constant(h, w, -1.0f);
  for (const Detection& d : detections) {
    if (d.score < params.score_floor) continue;
    const PixelRect r = clip(d.bbox.pixels(), w, h);
    if (r.empty()) continue;
    auto blk = cover.block(r.y0, r.x0, r.height(), r.width());
    blk = blk.max(static_cast<float>(d.score));
  }

  const auto frame = static_cast<std::int32_t>(frame_idx);
  const double miss_frames = params.miss_tolerance_s * fps;
  const double suspicious_frames = params.suspicious_duration_s * fps;
  const double abnormal_frames = params.min_abnormal_duration_s * fps;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float s = cover(y, x);
      if (s >= 0.0f) {
        if (grid.detected(y, x) == 0) {
          grid.start(y, x) = frame;
          grid.score(y, x) = s;
          grid.detected(y, x) = 1;
        } else {
          ++grid.detected(y, x);
          grid.score(y, x) += (s - grid.score(y, x)) / static_cast<float>(grid.detected(y, x));
        }
        grid.undetected(y, x) = 0;
        grid.end(y, x) = frame;
        const double elapsed = static_cast<double>(frame - grid.start(y, x));
        auto st = static_cast<PixelState>(grid.state(y, x));
        if (elapsed >= abnormal_frames) {
          st = PixelState::anomalous;
        } else if (elapsed >= suspicious_frames && st == PixelState::normal) {
          st = PixelState::suspicious;
        }
        grid.state(y, x) = static_cast<std::uint8_t>(st);
      } else {
        if (grid.undetected(y, x) < std::numeric_limits<std::int32_t>::max()) ++grid.undetected(y, x);
        if (grid.detected(y, x) > 0 && static_cast<double>(frame - grid.end(y, x)) > miss_frames) {
          grid.detected(y, x) = 0;
          grid.state(y, x) = static_cast<std::uint8_t>(PixelState::normal);
          grid.score(y, x) = 0.0f;
          grid.start(y, x) = -1;
          grid.end(y, x) = -1;
        }
      }
    }
  }
}

std::vector<AnomalyEvent> extract_pixel_anomalies(const PixelStateGrid& grid, const RoadMask& road_mask,
                                                  std::span<const Detection> recent_detections, double fps,
                                                  const std::string& video_id) {
  require_same_size(grid.state, road_mask.mask(), "extract_pixel_anomalies");
  const Mask anomalous = (grid.state == static_cast<std::uint8_t>(PixelState::anomalous)).cast<std::uint8_t>();
  std::vector<AnomalyEvent> events;
  if (!anomalous.any()) return events;
  const Labeling lab = label_components(anomalous);

  struct Acc {
    bool on_road = false;
    std::int32_t min_start = std::numeric_limits<std::int32_t>::max();
    double score_sum = 0.0;
  };
  std::vector<Acc> acc(lab.components.size() + 1);
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      const int l = lab.labels(y, x);
      if (l == 0) continue;
      Acc& a = acc[static_cast<std::size_t>(l)];
      a.on_road = a.on_road || road_mask.mask()(y, x) != 0;
      a.min_start = std::min(a.min_start, grid.start(y, x));
      a.score_sum += grid.score(y, x);
    }
  }

  for (const Component& c : lab.components) {
    const Acc& a = acc[static_cast<std::size_t>(c.label)];
    if (!a.on_road) continue;
    const BBox rect{static_cast<double>(c.bounds.x0), static_cast<double>(c.bounds.y0),
                    static_cast<double>(c.bounds.x1), static_cast<double>(c.bounds.y1)};
    BBox best = rect;
    double best_iou = 0.0;
    for (const Detection& d : recent_detections) {
      const double v = iou(d.bbox, rect);
      if (v > best_iou) {
        best_iou = v;
        best = d.bbox;
      }
    }
    AnomalyEvent ev;
    ev.video_id = video_id;
    ev.start_time = TimeStamp::from_frame(a.min_start, fps);
    ev.bbox = best;
    ev.confidence = std::clamp(a.score_sum / static_cast<double>(c.area), 0.0, 1.0);
    ev.branch = Branch::pixel;
    ev.history.emplace_back("pixel-coarse", ev.start_time.seconds);
    events.push_back(std::move(ev));
  }
  return events;
}

}  // namespace stalltrace
