#pragma once

#include <span>
#include <vector>

#include "stalltrace/core.hpp"

namespace stalltrace {

class FrameSource;
class DetectionSet;

struct SimilarityThresholds {
  double psnr_stop = 13.0;
  double ssim_stop = 0.4;
  double euclid_stop = 0.7;
  double psnr_avg = 10.0;
  double ssim_avg = 0.3;
  double euclid_avg = 0.65;
  double max_backtrack_s = 15.0;
  double roi_iou_thresh = 0.9;
  double max_deviation_s = 12.0;

  /// Vote weights; a comparison is "same" when the weight of agreeing metrics reaches the quorum.
  double psnr_weight = 1.0;
  double ssim_weight = 1.0;
  double euclid_weight = 1.0;
  double vote_quorum = 2.0;

  int stride = 3;
  /// Half-width of the window around the coarse frame searched for a matching original detection.
  double roi_search_s = 1.0;
  /// Box overlap needed for two events to describe the same vehicle.
  double fusion_iou = 0.3;
  int ssim_window = 8;

  void validate() const;
};

enum class Vote { same, changed };

Vote vote_fuse(double psnr, double ssim, double euclid, const SimilarityThresholds& t);

/// Walks original frames backward from the coarse start, comparing the ROI at the coarse frame with
/// earlier ROIs. Events whose box has no original detection above `roi_iou_thresh` near the coarse
/// time are returned unchanged.
AnomalyEvent backtrack_start(const AnomalyEvent& event, const FrameSource& frames, const DetectionSet& original,
                             const SimilarityThresholds& t);

/// Merges same-vehicle events from the two static branches and collapses duplicates to the earliest.
std::vector<AnomalyEvent> fuse_branch_events(std::span<const AnomalyEvent> pixel_events,
                                             std::span<const AnomalyEvent> box_events,
                                             const SimilarityThresholds& t);

/// Collapses events that overlap (IoU >= iou_thresh) and start within max_deviation_s of each other,
/// keeping the earliest. Stable for equal start times.
std::vector<AnomalyEvent> collapse_duplicates(std::vector<AnomalyEvent> events, double iou_thresh,
                                              double max_deviation_s);

}  // namespace stalltrace
