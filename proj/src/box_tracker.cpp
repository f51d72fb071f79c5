#include "stalltrace/box_tracker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <Eigen/Cholesky>

#include "stalltrace/assignment.hpp"
#include "stalltrace/road_mask.hpp"
#include "stalltrace/text.hpp"

namespace stalltrace {
namespace {

constexpr double kStdPosition = 1.0 / 20.0;
constexpr double kStdVelocity = 1.0 / 160.0;

Eigen::Vector4d measurement(const BBox& b) {
  return {(b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0, b.width(), b.height()};
}

}  // namespace

BoxKalman::BoxKalman(const BBox& initial) {
  x_.setZero();
  x_.head<4>() = measurement(initial);
  const double h = std::max(1.0, initial.height());
  Eigen::Matrix<double, 8, 1> std_dev;
  std_dev << 2 * kStdPosition * h, 2 * kStdPosition * h, 2 * kStdPosition * h, 2 * kStdPosition * h,
      10 * kStdVelocity * h, 10 * kStdVelocity * h, 10 * kStdVelocity * h, 10 * kStdVelocity * h;
  p_ = std_dev.array().square().matrix().asDiagonal();
}

void BoxKalman::predict() {
  Cov f = Cov::Identity();
  f.topRightCorner<4, 4>().setIdentity();
  const double h = std::max(1.0, x_(3));
  Eigen::Matrix<double, 8, 1> q;
  q << kStdPosition * h, kStdPosition * h, kStdPosition * h, kStdPosition * h, kStdVelocity * h,
      kStdVelocity * h, kStdVelocity * h, kStdVelocity * h;
  x_ = f * x_;
  p_ = f * p_ * f.transpose();
  p_.diagonal() += q.array().square().matrix();
}

void BoxKalman::update(const BBox& measured) {
  const double h = std::max(1.0, x_(3));
  const Eigen::Matrix4d r = Eigen::Vector4d::Constant(kStdPosition * h).array().square().matrix().asDiagonal();
  const Eigen::Matrix4d s = p_.topLeftCorner<4, 4>() + r;
  const Eigen::Matrix<double, 8, 4> pht = p_.leftCols<4>();
  const Eigen::Matrix<double, 8, 4> gain = s.ldlt().solve(pht.transpose()).transpose();
  x_ += gain * (measurement(measured) - x_.head<4>());
  p_ -= gain * pht.transpose();
  p_ = 0.5 * (p_ + p_.transpose());
}

BBox BoxKalman::box() const {
  const double w = std::max(0.0, x_(2));
  const double h = std::max(0.0, x_(3));
  return {x_(0) - w / 2.0, x_(1) - h / 2.0, x_(0) + w / 2.0, x_(1) + h / 2.0};
}

std::optional<int> retrieve_id(std::span<const Track> lost_tracks, const Track& new_track, double threshold) {
  if (new_track.history.empty()) return std::nullopt;
  std::optional<int> best;
  double best_iou = -1.0;
  for (const Track& t : lost_tracks) {
    if (t.history.empty()) continue;
    const double v = iou(t.last_box(), new_track.first_box());
    if (v < threshold) continue;
    if (v > best_iou || (v == best_iou && t.id < *best)) {
      best_iou = v;
      best = t.id;
    }
  }
  return best;
}

void BoxTracker::step(std::span<const Detection> detections, std::int64_t frame_idx) {
  for (Track& t : active_) t.motion->predict();

  const auto n_det = static_cast<Eigen::Index>(detections.size());
  const auto n_trk = static_cast<Eigen::Index>(active_.size());
  std::vector<int> det_to_track(detections.size(), -1);
  if (n_det > 0 && n_trk > 0) {
    Eigen::MatrixXd ious(n_det, n_trk);
    for (Eigen::Index d = 0; d < n_det; ++d) {
      for (Eigen::Index t = 0; t < n_trk; ++t) {
        ious(d, t) = iou(detections[static_cast<std::size_t>(d)].bbox, active_[static_cast<std::size_t>(t)].motion->box());
      }
    }
    // Gate-violating pairs get a prohibitive cost, so feasible pair count is maximised first.
    const Eigen::MatrixXd cost = (ious.array() >= params_.gate_iou).select(1.0 - ious.array(), 1e6).matrix();
    const std::vector<int> assign = solve_assignment(cost);
    for (std::size_t d = 0; d < assign.size(); ++d) {
      const int t = assign[d];
      if (t >= 0 && ious(static_cast<Eigen::Index>(d), t) >= params_.gate_iou) det_to_track[d] = t;
    }
  }

  std::vector<char> track_matched(active_.size(), 0);
  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (det_to_track[d] < 0) continue;
    Track& t = active_[static_cast<std::size_t>(det_to_track[d])];
    track_matched[static_cast<std::size_t>(det_to_track[d])] = 1;
    t.motion->update(detections[d].bbox);
    t.history.push_back({frame_idx, detections[d].bbox, detections[d].score});
    ++t.consecutive_hits;
    t.time_since_update = 0;
    if (t.status == TrackStatus::tentative && t.consecutive_hits >= params_.min_hits) {
      t.status = TrackStatus::confirmed;
      t.ever_confirmed = true;
    }
  }

  std::vector<Track> next;
  next.reserve(active_.size() + detections.size());
  for (std::size_t i = 0; i < active_.size(); ++i) {
    Track& t = active_[i];
    if (track_matched[i]) {
      next.push_back(std::move(t));
      continue;
    }
    t.consecutive_hits = 0;
    ++t.time_since_update;
    if (t.status == TrackStatus::tentative) continue;  // unconfirmed tracks die on their first miss
    if (t.time_since_update > params_.max_age) {
      t.status = TrackStatus::lost;
      lost_.push_back(std::move(t));
    } else {
      next.push_back(std::move(t));
    }
  }

  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (det_to_track[d] >= 0) continue;
    Track t;
    t.history.push_back({frame_idx, detections[d].bbox, detections[d].score});
    t.motion.emplace(detections[d].bbox);
    t.consecutive_hits = 1;
    if (auto id = retrieve_id(lost_, t, params_.retrieve_iou)) {
      auto it = std::find_if(lost_.begin(), lost_.end(), [&](const Track& l) { return l.id == *id; });
      Track resumed = std::move(*it);
      lost_.erase(it);
      resumed.history.push_back(t.history.front());
      resumed.motion.emplace(detections[d].bbox);
      resumed.status = TrackStatus::confirmed;
      resumed.consecutive_hits = 1;
      resumed.time_since_update = 0;
      next.push_back(std::move(resumed));
      continue;
    }
    t.id = next_id_++;
    if (params_.min_hits <= 1) {
      t.status = TrackStatus::confirmed;
      t.ever_confirmed = true;
    }
    next.push_back(std::move(t));
  }
  active_ = std::move(next);
}

std::vector<Track> BoxTracker::tracks() const {
  std::vector<Track> out;
  for (const auto* group : {&active_, &lost_}) {
    for (const Track& t : *group) {
      if (t.ever_confirmed) out.push_back(t);
    }
  }
  std::sort(out.begin(), out.end(), [](const Track& a, const Track& b) { return a.id < b.id; });
  return out;
}

std::pair<std::size_t, std::size_t> stable_span(const Track& track, double std_max) {
  const std::size_t n = track.history.size();
  if (n == 0) return {0, 0};
  // Prefix sums of centers and squared centers for O(1) population variance per range.
  std::vector<double> sx(n + 1, 0.0), sy(n + 1, 0.0), sxx(n + 1, 0.0), syy(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 c = bbox_center(track.history[i].bbox);
    sx[i + 1] = sx[i] + c.x;
    sy[i + 1] = sy[i] + c.y;
    sxx[i + 1] = sxx[i] + c.x * c.x;
    syy[i + 1] = syy[i] + c.y * c.y;
  }
  auto stable = [&](std::size_t b, std::size_t e) {
    if (e - b < 2) return true;
    const double k = static_cast<double>(e - b);
    const double mx = (sx[e] - sx[b]) / k;
    const double my = (sy[e] - sy[b]) / k;
    const double vx = std::max(0.0, (sxx[e] - sxx[b]) / k - mx * mx);
    const double vy = std::max(0.0, (syy[e] - syy[b]) / k - my * my);
    return std::sqrt(vx) < std_max && std::sqrt(vy) < std_max;
  };
  std::pair<std::size_t, std::size_t> best{0, 1};
  for (std::size_t b = 0; b < n; ++b) {
    if (n - b <= best.second - best.first) break;
    for (std::size_t e = n; e > b + (best.second - best.first); --e) {
      if (stable(b, e)) {
        best = {b, e};
        break;
      }
    }
  }
  return best;
}

std::vector<AnomalyEvent> classify_box_anomalies(std::span<const Track> tracks, const RoadMask& road_mask,
                                                 const AnomalyCriteria& criteria, double fps,
                                                 const std::string& video_id) {
  std::vector<AnomalyEvent> events;
  for (const Track& t : tracks) {
    if (t.history.size() < 2) continue;
    const auto [b, e] = stable_span(t, criteria.center_std_max);
    if (e - b < 2) continue;
    const auto& first = t.history[b];
    const auto& last = t.history[e - 1];
    const double duration = static_cast<double>(last.frame_idx - first.frame_idx) / fps;
    if (duration < criteria.min_duration_s) continue;

    // Trailing windows ending at the span's last observation: window w covers (end - (w+1)W, end - wW].
    int present = 0;
    for (int w = 0; w < criteria.window_count; ++w) {
      const double hi = static_cast<double>(last.frame_idx) - w * criteria.window_s * fps;
      const double lo = hi - criteria.window_s * fps;
      const bool seen = std::any_of(t.history.begin() + static_cast<std::ptrdiff_t>(b),
                                    t.history.begin() + static_cast<std::ptrdiff_t>(e), [&](const TrackObservation& o) {
                                      const auto f = static_cast<double>(o.frame_idx);
                                      return f > lo && f <= hi;
                                    });
      present += seen ? 1 : 0;
    }
    if (present < criteria.min_windows_present) continue;

    BBox mean_box{};
    double score = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const BBox& bb = t.history[i].bbox;
      mean_box.x1 += bb.x1;
      mean_box.y1 += bb.y1;
      mean_box.x2 += bb.x2;
      mean_box.y2 += bb.y2;
      score += t.history[i].score;
    }
    const double k = static_cast<double>(e - b);
    mean_box = {mean_box.x1 / k, mean_box.y1 / k, mean_box.x2 / k, mean_box.y2 / k};
    if (!road_mask.contains(bbox_center(mean_box))) continue;

    AnomalyEvent ev;
    ev.video_id = video_id;
    ev.start_time = TimeStamp::from_frame(first.frame_idx, fps);
    ev.bbox = mean_box;
    ev.confidence = std::clamp(score / k, 0.0, 1.0);
    ev.branch = Branch::box;
    ev.history.emplace_back("box-coarse", ev.start_time.seconds);
    events.push_back(std::move(ev));
  }
  std::sort(events.begin(), events.end(),
            [](const AnomalyEvent& a, const AnomalyEvent& b) { return a.start_time < b.start_time; });
  return events;
}

void write_tracks(const std::string& path, std::span<const Track> tracks) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write tracks " + path);
  for (const Track& t : tracks) {
    for (const auto& o : t.history) {
      out << t.id << '\t' << o.frame_idx << '\t' << format_double(o.bbox.x1) << '\t' << format_double(o.bbox.y1)
          << '\t' << format_double(o.bbox.x2) << '\t' << format_double(o.bbox.y2) << '\n';
    }
  }
}

std::vector<Track> load_tracks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open tracks " + path);
  std::map<int, Track> by_id;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 6) throw Error(path + ":" + std::to_string(line_no) + ": expected 6 fields");
    const int id = static_cast<int>(parse_int(f[0]));
    Track& t = by_id[id];
    t.id = id;
    t.status = TrackStatus::confirmed;
    t.ever_confirmed = true;
    t.history.push_back({parse_int(f[1]),
                         BBox{parse_double(f[2]), parse_double(f[3]), parse_double(f[4]), parse_double(f[5])}, 1.0});
  }
  std::vector<Track> out;
  for (auto& [_, t] : by_id) out.push_back(std::move(t));
  return out;
}

}  // namespace stalltrace
