#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stalltrace/core.hpp"

namespace stalltrace {

class RoadMask;

/// Constant-velocity Kalman filter over (cx, cy, w, h) and their rates.
class BoxKalman {
 public:
  using State = Eigen::Matrix<double, 8, 1>;
  using Cov = Eigen::Matrix<double, 8, 8>;

  explicit BoxKalman(const BBox& initial);

  void predict();
  void update(const BBox& measured);

  [[nodiscard]] BBox box() const;
  [[nodiscard]] const State& state() const { return x_; }
  [[nodiscard]] const Cov& covariance() const { return p_; }

 private:
  State x_;
  Cov p_;
};

enum class TrackStatus { tentative, confirmed, lost };

struct TrackObservation {
  std::int64_t frame_idx = 0;
  BBox bbox;
  double score = 0.0;
};

struct Track {
  int id = 0;
  std::vector<TrackObservation> history;
  TrackStatus status = TrackStatus::tentative;
  std::optional<BoxKalman> motion;
  int consecutive_hits = 0;
  int time_since_update = 0;
  bool ever_confirmed = false;

  [[nodiscard]] const BBox& first_box() const { return history.front().bbox; }
  [[nodiscard]] const BBox& last_box() const { return history.back().bbox; }
};

struct BoxTrackerParams {
  /// Association gate; pairs below it are never matched.
  double gate_iou = 0.1;
  int min_hits = 3;
  /// Steps without a match before a confirmed track is declared lost.
  int max_age = 30;
  double retrieve_iou = 0.3;
};

/// Id of the lost track a new track continues, if any: best IoU between the lost track's last box and
/// the new track's first box, at least `threshold`; ties go to the smaller id.
std::optional<int> retrieve_id(std::span<const Track> lost_tracks, const Track& new_track, double threshold = 0.3);

class BoxTracker {
 public:
  explicit BoxTracker(BoxTrackerParams params = {}) : params_(params) {}

  /// One frame: predict, optimal IoU assignment, update, spawn, age.
  void step(std::span<const Detection> detections, std::int64_t frame_idx);

  /// Tracks currently tentative or confirmed.
  [[nodiscard]] const std::vector<Track>& active() const { return active_; }
  [[nodiscard]] const std::vector<Track>& lost() const { return lost_; }
  /// Every track that was ever confirmed (active and lost), ordered by id.
  [[nodiscard]] std::vector<Track> tracks() const;

 private:
  BoxTrackerParams params_;
  std::vector<Track> active_;
  std::vector<Track> lost_;
  int next_id_ = 1;
};

inline void tracker_step(BoxTracker& tracker, std::span<const Detection> detections, std::int64_t frame_idx) {
  tracker.step(detections, frame_idx);
}

struct AnomalyCriteria {
  double min_duration_s = 40.0;
  double window_s = 10.0;
  int window_count = 5;
  int min_windows_present = 4;
  double iou_retrieve_thresh = 0.3;
  double center_std_max = 3.0;
};

/// Longest contiguous run of a track's observations whose center std stays below `std_max` on both
/// axes; returns [begin, end) indices, earliest on ties.
std::pair<std::size_t, std::size_t> stable_span(const Track& track, double std_max);

/// Interval / frequency / stability / road-mask test on tracks built over the background stream.
std::vector<AnomalyEvent> classify_box_anomalies(std::span<const Track> tracks, const RoadMask& road_mask,
                                                 const AnomalyCriteria& criteria, double fps,
                                                 const std::string& video_id);

/// Track dump lines: `track_id frame_idx x1 y1 x2 y2`.
void write_tracks(const std::string& path, std::span<const Track> tracks);
std::vector<Track> load_tracks(const std::string& path);

}  // namespace stalltrace
