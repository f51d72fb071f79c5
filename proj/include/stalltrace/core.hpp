#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stalltrace/image.hpp"

namespace stalltrace {

/// Axis-aligned box in continuous pixel coordinates, origin top-left.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  [[nodiscard]] double width() const { return x2 - x1; }
  [[nodiscard]] double height() const { return y2 - y1; }
  [[nodiscard]] double area() const { return width() * height(); }
  [[nodiscard]] bool valid() const;

  /// Smallest integer pixel rectangle covering the box after rounding each edge.
  [[nodiscard]] PixelRect pixels() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
  std::int64_t frame_idx = 0;
  BBox bbox;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct TimeStamp {
  double seconds = 0.0;

  static TimeStamp from_frame(std::int64_t frame_idx, double fps) {
    return TimeStamp{static_cast<double>(frame_idx) / fps};
  }
  [[nodiscard]] std::int64_t to_frame(double fps) const;

  friend auto operator<=>(const TimeStamp&, const TimeStamp&) = default;
};

enum class Branch { pixel, box, fused, flow_refined, trajectory_refined };

std::string_view to_string(Branch b);
Branch branch_from_string(std::string_view s);

struct AnomalyEvent {
  std::string video_id;
  TimeStamp start_time;
  BBox bbox;
  double confidence = 0.0;
  Branch branch = Branch::box;
  /// Start-time refinement trail, oldest first (coarse, backtracked, dynamic...).
  std::vector<std::pair<std::string, double>> history;
};

/// Intersection over union; zero-area pairs give 0.
double iou(const BBox& a, const BBox& b);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

Point2 bbox_center(const BBox& b);

class InsufficientHistory : public Error {
 public:
  using Error::Error;
};

/// Population standard deviation of the box centers, per axis.
std::pair<double, double> center_stability(std::span<const BBox> window);

}  // namespace stalltrace
