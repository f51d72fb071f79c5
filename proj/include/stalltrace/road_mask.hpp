#pragma once

#include <span>

#include "stalltrace/core.hpp"
#include "stalltrace/image.hpp"

namespace stalltrace {

struct Track;

struct MotionMaskParams {
  /// Frame subtraction interval.
  int k = 3;
  /// Shake guard as a fraction of the frame area (T1 = t1_fraction * H * W).
  double t1_fraction = 0.5;
  /// Minimum connected-region area kept (T2).
  long t2 = 30;
  int binarize_thresh = 15;
  /// Difference frames whose total changed area exceeds this are rejected as shaking.
  long area_filter = 6000;

  [[nodiscard]] long t1(int height, int width) const {
    return static_cast<long>(t1_fraction * static_cast<double>(height) * static_cast<double>(width));
  }
};

struct RoadMaskParams {
  MotionMaskParams motion;
  int min_hits = 5;
  int dilate_iters = 2;
  int erode_iters = 2;
  int kernel_size = 5;
};

enum class MotionUpdate { accumulated, skipped_shake, skipped_area };

/// Accumulates |frame_t - frame_{t-k}| changes into `acc` unless the pair trips a shake guard.
MotionUpdate motion_mask_update(ImageI& acc, const ImageU8& frame_t, const ImageU8& frame_t_minus_k,
                                const MotionMaskParams& params);

/// Adds one hit over every tracked box footprint.
void trajectory_mask_update(ImageI& acc, std::span<const Track> tracks);
void accumulate_box(ImageI& acc, const BBox& box);

/// Dilation followed by erosion with a square structuring element.
Mask morph_repair(const Mask& mask, int dilate_iters, int erode_iters, int kernel_size);

class RoadMask {
 public:
  RoadMask() = default;
  RoadMask(Mask mask, ImageI motion_hits, ImageI trajectory_hits)
      : mask_(std::move(mask)), motion_hits_(std::move(motion_hits)), trajectory_hits_(std::move(trajectory_hits)) {}

  /// Mask that accepts everything; for callers without a road prior.
  static RoadMask everywhere(int height, int width);

  [[nodiscard]] const Mask& mask() const { return mask_; }
  [[nodiscard]] const ImageI& motion_hits() const { return motion_hits_; }
  [[nodiscard]] const ImageI& trajectory_hits() const { return trajectory_hits_; }
  [[nodiscard]] bool contains(const Point2& p) const;
  [[nodiscard]] long area() const { return static_cast<long>((mask_ != 0).count()); }
  [[nodiscard]] int height() const { return static_cast<int>(mask_.rows()); }
  [[nodiscard]] int width() const { return static_cast<int>(mask_.cols()); }

 private:
  Mask mask_;
  ImageI motion_hits_;
  ImageI trajectory_hits_;
};

RoadMask fuse_masks(const ImageI& motion_acc, const ImageI& traj_acc, const RoadMaskParams& params);

}  // namespace stalltrace
