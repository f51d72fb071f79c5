#include "stalltrace/core.hpp"

#include <algorithm>
#include <cmath>

namespace stalltrace {

bool BBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) && x1 <= x2 &&
         y1 <= y2;
}

PixelRect BBox::pixels() const {
  return PixelRect{static_cast<int>(std::lround(x1)), static_cast<int>(std::lround(y1)),
                   static_cast<int>(std::lround(x2)), static_cast<int>(std::lround(y2))};
}

std::int64_t TimeStamp::to_frame(double fps) const { return std::llround(seconds * fps); }

std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::pixel:
      return "pixel";
    case Branch::box:
      return "box";
    case Branch::fused:
      return "fused";
    case Branch::flow_refined:
      return "flow-refined";
    case Branch::trajectory_refined:
      return "trajectory-refined";
  }
  return "box";
}

Branch branch_from_string(std::string_view s) {
  for (Branch b : {Branch::pixel, Branch::box, Branch::fused, Branch::flow_refined, Branch::trajectory_refined}) {
    if (to_string(b) == s) return b;
  }
  throw Error("unknown branch '" + std::string(s) + "'");
}

double iou(const BBox& a, const BBox& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

Point2 bbox_center(const BBox& b) { return {(b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0}; }

std::pair<double, double> center_stability(std::span<const BBox> window) {
  if (window.size() < 2) {
    throw InsufficientHistory("center_stability: need at least 2 boxes, got " + std::to_string(window.size()));
  }
  Eigen::ArrayXd xs(static_cast<Eigen::Index>(window.size()));
  Eigen::ArrayXd ys(xs.size());
  for (std::size_t i = 0; i < window.size(); ++i) {
    const Point2 c = bbox_center(window[i]);
    xs[static_cast<Eigen::Index>(i)] = c.x;
    ys[static_cast<Eigen::Index>(i)] = c.y;
  }
  const double sx = std::sqrt((xs - xs.mean()).square().mean());
  const double sy = std::sqrt((ys - ys.mean()).square().mean());
  return {sx, sy};
}

}  // namespace stalltrace
