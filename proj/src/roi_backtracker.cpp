#include "stalltrace/roi_backtracker.hpp"

#include <algorithm>
#include <cmath>

#include "stalltrace/ingest.hpp"
#include "stalltrace/similarity.hpp"

namespace stalltrace {

void SimilarityThresholds::validate() const {
  if (psnr_stop < psnr_avg || ssim_stop < ssim_avg || euclid_stop < euclid_avg) {
    throw Error("backtrack: stop thresholds must be >= average thresholds");
  }
  if (stride < 1) throw Error("backtrack: stride must be >= 1");
  if (max_backtrack_s < 0 || max_deviation_s < 0) throw Error("backtrack: durations must be non-negative");
}

Vote vote_fuse(double psnr, double ssim, double euclid, const SimilarityThresholds& t) {
  double agree = 0.0;
  if (psnr > t.psnr_stop) agree += t.psnr_weight;
  if (ssim > t.ssim_stop) agree += t.ssim_weight;
  if (euclid > t.euclid_stop) agree += t.euclid_weight;
  return agree >= t.vote_quorum ? Vote::same : Vote::changed;
}

AnomalyEvent backtrack_start(const AnomalyEvent& event, const FrameSource& frames, const DetectionSet& original,
                             const SimilarityThresholds& t) {
  const VideoManifest& m = frames.manifest();
  const std::int64_t coarse = std::clamp<std::int64_t>(event.start_time.to_frame(m.fps), 0, m.frame_count - 1);

  // Object-level gate: the ROI must correspond to an original-stream detection near the coarse time.
  const auto search = static_cast<std::int64_t>(std::llround(t.roi_search_s * m.fps));
  double best_iou = 0.0;
  BBox roi_box = event.bbox;
  std::int64_t best_gap = 0;
  for (std::int64_t f = std::max<std::int64_t>(0, coarse - search); f <= std::min(m.frame_count - 1, coarse + search);
       ++f) {
    for (const Detection& d : original.at(f)) {
      const double v = iou(d.bbox, event.bbox);
      const std::int64_t gap = std::abs(f - coarse);
      if (v > best_iou || (v == best_iou && gap < best_gap)) {
        best_iou = v;
        best_gap = gap;
        roi_box = d.bbox;
      }
    }
  }
  if (best_iou < t.roi_iou_thresh) return event;

  const PixelRect roi = clip(roi_box.pixels(), m.width, m.height);
  if (roi.width() < t.ssim_window || roi.height() < t.ssim_window) return event;

  const ImageU8 reference = patch(frames.gray(coarse), roi);
  const auto limit = static_cast<std::int64_t>(std::floor(t.max_backtrack_s * m.fps + 1e-9));
  std::int64_t earliest = coarse;
  double sum_psnr = 0.0, sum_ssim = 0.0, sum_euclid = 0.0;
  int compared = 0;
  for (std::int64_t f = coarse - t.stride; f >= 0 && coarse - f <= limit; f -= t.stride) {
    const ImageU8 candidate = patch(frames.gray(f), roi);
    const double p = psnr(reference, candidate);
    const double s = ssim(reference, candidate, t.ssim_window);
    const double e = euclid_similarity(reference, candidate);
    ++compared;
    sum_psnr += p;
    sum_ssim += s;
    sum_euclid += e;
    const bool averages_hold = sum_psnr / compared > t.psnr_avg && sum_ssim / compared > t.ssim_avg &&
                               sum_euclid / compared > t.euclid_avg;
    if (vote_fuse(p, s, e, t) != Vote::same || !averages_hold) break;
    earliest = f;
  }

  AnomalyEvent out = event;
  out.bbox = roi_box;
  out.start_time = TimeStamp::from_frame(earliest, m.fps);
  out.history.emplace_back("backtracked", out.start_time.seconds);
  return out;
}

std::vector<AnomalyEvent> collapse_duplicates(std::vector<AnomalyEvent> events, double iou_thresh,
                                              double max_deviation_s) {
  std::stable_sort(events.begin(), events.end(), [](const AnomalyEvent& a, const AnomalyEvent& b) {
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    return a.start_time < b.start_time;
  });
  std::vector<AnomalyEvent> kept;
  for (AnomalyEvent& ev : events) {
    const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const AnomalyEvent& k) {
      return k.video_id == ev.video_id && iou(k.bbox, ev.bbox) >= iou_thresh &&
             std::abs(k.start_time.seconds - ev.start_time.seconds) <= max_deviation_s;
    });
    if (!duplicate) kept.push_back(std::move(ev));
  }
  return kept;
}

std::vector<AnomalyEvent> fuse_branch_events(std::span<const AnomalyEvent> pixel_events,
                                             std::span<const AnomalyEvent> box_events,
                                             const SimilarityThresholds& t) {
  const auto pix = collapse_duplicates({pixel_events.begin(), pixel_events.end()}, t.fusion_iou, t.max_deviation_s);
  const auto box = collapse_duplicates({box_events.begin(), box_events.end()}, t.fusion_iou, t.max_deviation_s);
  std::vector<char> box_used(box.size(), 0);
  std::vector<AnomalyEvent> out;
  for (const AnomalyEvent& p : pix) {
    std::ptrdiff_t best = -1;
    double best_dt = 0.0;
    double best_iou = 0.0;
    for (std::size_t i = 0; i < box.size(); ++i) {
      if (box_used[i] || box[i].video_id != p.video_id) continue;
      const double v = iou(p.bbox, box[i].bbox);
      const double dt = std::abs(p.start_time.seconds - box[i].start_time.seconds);
      if (v < t.fusion_iou || dt > t.max_deviation_s) continue;
      if (best < 0 || dt < best_dt || (dt == best_dt && v > best_iou)) {
        best = static_cast<std::ptrdiff_t>(i);
        best_dt = dt;
        best_iou = v;
      }
    }
    if (best < 0) {
      out.push_back(p);
      continue;
    }
    const AnomalyEvent& b = box[static_cast<std::size_t>(best)];
    box_used[static_cast<std::size_t>(best)] = 1;
    const bool pixel_first = p.start_time <= b.start_time;
    AnomalyEvent merged = pixel_first ? p : b;
    const AnomalyEvent& other = pixel_first ? b : p;
    merged.branch = Branch::fused;
    merged.confidence = std::max(p.confidence, b.confidence);
    merged.history.insert(merged.history.end(), other.history.begin(), other.history.end());
    merged.history.emplace_back("fused", merged.start_time.seconds);
    out.push_back(std::move(merged));
  }
  for (std::size_t i = 0; i < box.size(); ++i) {
    if (!box_used[i]) out.push_back(box[i]);
  }
  return collapse_duplicates(std::move(out), t.fusion_iou, t.max_deviation_s);
}

}  // namespace stalltrace
