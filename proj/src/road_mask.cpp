#include "stalltrace/road_mask.hpp"

#include <cmath>

#include "stalltrace/box_tracker.hpp"
#include "stalltrace/image_ops.hpp"

namespace stalltrace {

MotionUpdate motion_mask_update(ImageI& acc, const ImageU8& frame_t, const ImageU8& frame_t_minus_k,
                                const MotionMaskParams& params) {
  require_same_size(frame_t, frame_t_minus_k, "motion_mask_update");
  require_same_size(acc, frame_t, "motion_mask_update");
  const Mask diff =
      ((frame_t.cast<int>() - frame_t_minus_k.cast<int>()).abs() > params.binarize_thresh).cast<std::uint8_t>();
  const long changed = static_cast<long>((diff != 0).count());
  if (changed > params.t1(static_cast<int>(frame_t.rows()), static_cast<int>(frame_t.cols()))) {
    return MotionUpdate::skipped_shake;
  }
  if (changed > params.area_filter) return MotionUpdate::skipped_area;
  if (changed == 0) return MotionUpdate::accumulated;

  const Labeling lab = label_components(diff);
  std::vector<char> keep(lab.components.size() + 1, 0);
  for (const Component& c : lab.components) keep[static_cast<std::size_t>(c.label)] = c.area >= params.t2;
  for (Eigen::Index y = 0; y < acc.rows(); ++y) {
    for (Eigen::Index x = 0; x < acc.cols(); ++x) {
      if (keep[static_cast<std::size_t>(lab.labels(y, x))] && lab.labels(y, x) != 0) ++acc(y, x);
    }
  }
  return MotionUpdate::accumulated;
}

void accumulate_box(ImageI& acc, const BBox& box) {
  const PixelRect r = clip(box.pixels(), static_cast<int>(acc.cols()), static_cast<int>(acc.rows()));
  if (r.empty()) return;
  acc.block(r.y0, r.x0, r.height(), r.width()) += 1;
}

void trajectory_mask_update(ImageI& acc, std::span<const Track> tracks) {
  for (const Track& t : tracks) {
    for (const TrackObservation& o : t.history) accumulate_box(acc, o.bbox);
  }
}

Mask morph_repair(const Mask& mask, int dilate_iters, int erode_iters, int kernel_size) {
  Mask m = (mask != 0).cast<std::uint8_t>();
  if (dilate_iters > 0) m = dilate(m, kernel_size, dilate_iters);
  if (erode_iters > 0) m = erode(m, kernel_size, erode_iters);
  return m;
}

RoadMask RoadMask::everywhere(int height, int width) {
  return RoadMask(Mask::Ones(height, width), ImageI::Zero(height, width), ImageI::Zero(height, width));
}

bool RoadMask::contains(const Point2& p) const {
  const auto x = static_cast<Eigen::Index>(std::floor(p.x));
  const auto y = static_cast<Eigen::Index>(std::floor(p.y));
  if (x < 0 || y < 0 || y >= mask_.rows() || x >= mask_.cols()) return false;
  return mask_(y, x) != 0;
}

RoadMask fuse_masks(const ImageI& motion_acc, const ImageI& traj_acc, const RoadMaskParams& params) {
  require_same_size(motion_acc, traj_acc, "fuse_masks");
  const Mask raw = ((motion_acc >= params.min_hits) && (traj_acc >= params.min_hits)).cast<std::uint8_t>();
  return RoadMask(morph_repair(raw, params.dilate_iters, params.erode_iters, params.kernel_size), motion_acc,
                  traj_acc);
}

}  // namespace stalltrace
