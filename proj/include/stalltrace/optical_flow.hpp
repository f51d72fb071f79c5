#pragma once

#include <vector>

#include <Eigen/Core>

#include "stalltrace/core.hpp"

namespace stalltrace {

struct LkParams {
  int window = 15;
  int levels = 3;
  /// Lower bound on the smallest eigenvalue of the window's gradient matrix (per pixel, intensities in [0, 1]).
  double min_eig = 1e-4;
  int max_iters = 20;
  double epsilon = 0.01;
};

struct FlowPoint {
  Eigen::Vector2d pos = Eigen::Vector2d::Zero();
  bool tracked = true;
};

/// Gaussian pyramid of a frame normalised to [0, 1], with central-difference gradients per level.
class FlowPyramid {
 public:
  FlowPyramid() = default;
  FlowPyramid(const ImageU8& frame, int levels);

  [[nodiscard]] int levels() const { return static_cast<int>(img_.size()); }
  [[nodiscard]] const ImageF& image(int level) const { return img_[static_cast<std::size_t>(level)]; }
  [[nodiscard]] const ImageF& grad_x(int level) const { return gx_[static_cast<std::size_t>(level)]; }
  [[nodiscard]] const ImageF& grad_y(int level) const { return gy_[static_cast<std::size_t>(level)]; }
  [[nodiscard]] int width() const { return img_.empty() ? 0 : static_cast<int>(img_[0].cols()); }
  [[nodiscard]] int height() const { return img_.empty() ? 0 : static_cast<int>(img_[0].rows()); }

 private:
  std::vector<ImageF> img_, gx_, gy_;
};

/// Bilinear sample with border replication.
float sample_bilinear(const ImageF& img, double x, double y);

/// Tracks `points` from pyramid `from` into pyramid `to`. Points already lost stay lost; a point is lost
/// when its gradient matrix is ill-conditioned or it leaves the frame.
std::vector<FlowPoint> lk_step(const FlowPyramid& from, const FlowPyramid& to, std::span<const FlowPoint> points,
                               const LkParams& params);

/// Convenience overload building single-use pyramids.
std::vector<FlowPoint> lk_step(const ImageU8& from, const ImageU8& to, std::span<const FlowPoint> points,
                               const LkParams& params);

struct SeedParams {
  int count = 50;
  double min_distance = 3.0;
  /// Candidates must reach this fraction of the strongest response in the box.
  double quality = 0.01;
  /// Absolute response floor, same units as LkParams::min_eig.
  double min_response = 1e-4;
};

/// Shi-Tomasi corners inside `box`: 3x3 local maxima of the structure tensor's smaller eigenvalue,
/// strongest first, greedily spaced by min_distance.
std::vector<FlowPoint> seed_points(const BBox& box, const ImageU8& frame, const SeedParams& params);

}  // namespace stalltrace
