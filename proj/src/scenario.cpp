#include "stalltrace/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace stalltrace {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t hash3(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return mix(a ^ mix(b ^ mix(c))); }

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

constexpr double kCarW = 60.0;
constexpr double kCarH = 28.0;

}  // namespace

double Lane::y_at(double x) const {
  if (amplitude == 0.0) return y_center;
  return y_center + amplitude * std::sin(2.0 * std::numbers::pi * x / wavelength);
}

std::optional<BBox> CarActor::box_at(std::int64_t f) const {
  if (f < first_frame || f > last_frame()) return std::nullopt;
  const Eigen::Vector2d& p = positions[static_cast<std::size_t>(f - first_frame)];
  const double x = std::round(p.x()), y = std::round(p.y());
  return BBox{x, y, x + width, y + height};
}

VideoManifest Scenario::manifest() const {
  VideoManifest m;
  m.video_id = video_id;
  m.frame_dir = "frames";
  m.fps = fps;
  m.width = width;
  m.height = height;
  m.frame_count = frame_count;
  return m;
}

void Scenario::validate() const {
  if (width <= 0 || height <= 0 || frame_count <= 0 || fps <= 0) throw ScenarioError("scenario: bad dimensions");
  if (backdrop.rows() != height || backdrop.cols() != width) throw ScenarioError("scenario: backdrop size mismatch");
  for (const CarActor& c : cars) {
    if (c.positions.empty()) throw ScenarioError("scenario: car " + std::to_string(c.id) + " has no path");
    if (c.first_frame < 0 || c.last_frame() >= frame_count) {
      throw ScenarioError("scenario: car " + std::to_string(c.id) + " path exceeds the video");
    }
    bool visible = false;
    for (std::int64_t f = c.first_frame; f <= c.last_frame() && !visible; ++f) {
      const BBox b = *c.box_at(f);
      visible = b.x2 > 0 && b.y2 > 0 && b.x1 < width && b.y1 < height;
    }
    if (!visible) throw ScenarioError("scenario: car " + std::to_string(c.id) + " never enters the frame");
  }
  for (const BBox& b : truth_boxes) {
    if (b.x1 < 0 || b.y1 < 0 || b.x2 > width || b.y2 > height) {
      throw ScenarioError("scenario: anomalous vehicle stops outside the frame");
    }
  }
  for (const ShakeEvent& s : shakes) {
    if (s.frame < 0 || s.frame >= frame_count) throw ScenarioError("scenario: shake frame out of range");
  }
}

ImageU8 render_frame(const Scenario& s, std::int64_t f) {
  if (f < 0 || f >= s.frame_count) throw Error("render_frame: index out of range");
  ImageI canvas = s.backdrop.cast<std::int32_t>();
  for (const CarActor& c : s.cars) {
    const auto box = c.box_at(f);
    if (!box) continue;
    const PixelRect r = clip(box->pixels(), s.width, s.height);
    const auto bx = static_cast<int>(box->x1), by = static_cast<int>(box->y1);
    const int w = static_cast<int>(c.width), h = static_cast<int>(c.height);
    const int wx0 = static_cast<int>(0.68 * w), wx1 = static_cast<int>(0.82 * w);
    for (int y = r.y0; y < r.y1; ++y) {
      const int ly = y - by;
      for (int x = r.x0; x < r.x1; ++x) {
        const int lx = x - bx;
        if (lx >= wx0 && lx < wx1 && ly >= 4 && ly < h - 4) {
          canvas(y, x) = 70;
        } else {
          canvas(y, x) = c.body + static_cast<int>(hash3(static_cast<std::uint64_t>(c.id), static_cast<std::uint64_t>(lx),
                                                         static_cast<std::uint64_t>(ly)) % 13) - 6;
        }
      }
    }
  }
  for (const ShakeEvent& sh : s.shakes) {
    if (sh.frame != f) continue;
    ImageI shifted(canvas.rows(), canvas.cols());
    for (int y = 0; y < s.height; ++y) {
      const int sy = std::clamp(y - sh.dy, 0, s.height - 1);
      for (int x = 0; x < s.width; ++x) shifted(y, x) = canvas(sy, std::clamp(x - sh.dx, 0, s.width - 1)) + sh.brightness;
    }
    canvas = std::move(shifted);
  }
  ImageU8 out(s.height, s.width);
  const auto span = static_cast<std::uint64_t>(2 * s.noise_amplitude + 1);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      int v = canvas(y, x);
      if (s.noise_amplitude > 0) {
        const std::uint64_t h = hash3(s.seed, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(y) * 65536u + x);
        v += static_cast<int>(h % span) - s.noise_amplitude;
      }
      out(y, x) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
  }
  return out;
}

DetectionSet original_detections(const Scenario& s) {
  DetectionSet set(DetectionSource::original);
  for (std::int64_t f = 0; f < s.frame_count; ++f) {
    for (const CarActor& c : s.cars) {
      const auto box = c.box_at(f);
      if (!box) continue;
      BBox b{std::max(box->x1, 0.0), std::max(box->y1, 0.0), std::min(box->x2, double(s.width)),
             std::min(box->y2, double(s.height))};
      if (b.width() < 8.0 || b.height() < 8.0) continue;
      const std::uint64_t key = hash3(s.seed ^ 0xD37EC7ULL, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(c.id));
      if (unit(key) < s.detection_dropout) continue;
      // Jitter only grows the box so it always contains the rendered rectangle.
      b.x1 = std::max(0.0, b.x1 - s.detection_jitter * unit(mix(key + 1)));
      b.y1 = std::max(0.0, b.y1 - s.detection_jitter * unit(mix(key + 2)));
      b.x2 = std::min(double(s.width), b.x2 + s.detection_jitter * unit(mix(key + 3)));
      b.y2 = std::min(double(s.height), b.y2 + s.detection_jitter * unit(mix(key + 4)));
      set.add({f, b, 0.85 + 0.1 * unit(mix(key + 5))});
    }
  }
  return set;
}

std::vector<GroundTruth> ground_truth(const Scenario& s) {
  std::vector<GroundTruth> out;
  for (double t : s.truth_seconds) out.push_back({s.video_id, t});
  return out;
}

ImageU8 SyntheticFrameSource::gray(std::int64_t idx) const { return render_frame(*scenario_, idx); }

void generate_scenario(const Scenario& s, const std::filesystem::path& dir) {
  s.validate();
  std::filesystem::create_directories(dir / "frames");
  const VideoManifest m = s.manifest();
  for (std::int64_t f = 0; f < s.frame_count; ++f) {
    write_gray(dir / m.frame_dir / m.frame_path(f).filename(), render_frame(s, f));
  }
  write_manifest(dir / "manifest.txt", m);
  write_detections(dir / "detections_original.txt", original_detections(s));
  const auto gt = ground_truth(s);
  write_ground_truth(dir / "ground_truth.txt", gt);
}

// ---------------------------------------------------------------------------------------------
// Layout builders

namespace {

class Builder {
 public:
  Builder(std::string id, double seconds, std::uint64_t seed) : rng_(seed) {
    s_.video_id = std::move(id);
    s_.seed = seed;
    s_.frame_count = static_cast<std::int64_t>(std::llround(seconds * s_.fps));
    s_.backdrop = ImageU8(s_.height, s_.width);
    s_.road = Mask::Zero(s_.height, s_.width);
    paint_grass();
  }

  Scenario& scenario() { return s_; }
  std::mt19937_64& rng() { return rng_; }
  [[nodiscard]] std::int64_t frames(double seconds) const { return std::llround(seconds * s_.fps); }

  void straight_road(int lane_count, double first_center, double spacing = 32.0) {
    for (int i = 0; i < lane_count; ++i) s_.lanes.push_back({first_center + spacing * i, 0.0, 1.0, 3.0});
    const int top = static_cast<int>(first_center - kCarH / 2) - 1;
    const int bottom = static_cast<int>(first_center + spacing * (lane_count - 1) + kCarH / 2) + 1;
    for (int y = std::max(0, top); y < std::min(s_.height, bottom); ++y) {
      for (int x = 0; x < s_.width; ++x) paint_road(y, x);
    }
    for (int i = 0; i + 1 < lane_count; ++i) {
      const int my = static_cast<int>(first_center + spacing * (i + 0.5));
      for (int y = my - 1; y <= my; ++y) {
        for (int x = 0; x < s_.width; ++x) {
          if (x % 40 < 20) s_.backdrop(y, x) = 150;
        }
      }
    }
  }

  void curved_road(double center, double amplitude, double wavelength) {
    s_.lanes.push_back({center, amplitude, wavelength, 3.0});
    const Lane& lane = s_.lanes.back();
    for (int x = 0; x < s_.width; ++x) {
      // Boxes are axis-aligned, so the painted band follows the slope over a half car width.
      double lo = 1e9, hi = -1e9;
      for (double dx = -kCarW / 2; dx <= kCarW / 2; dx += 1.0) {
        lo = std::min(lo, lane.y_at(x + dx));
        hi = std::max(hi, lane.y_at(x + dx));
      }
      for (int y = std::max(0, int(lo - kCarH / 2) - 1); y < std::min(s_.height, int(hi + kCarH / 2) + 2); ++y) {
        paint_road(y, x);
      }
    }
  }

  void parking_lot(PixelRect r) {
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        const int v = 100 + static_cast<int>(hash3(s_.seed, 77, static_cast<std::uint64_t>(y * 4096 + x)) % 7) - 3;
        s_.backdrop(y, x) = static_cast<std::uint8_t>((x - r.x0) % 70 < 2 ? 140 : v);
      }
    }
  }

  /// A car parked at `top_left` for the whole video.
  void parked_car(Eigen::Vector2d top_left) {
    CarActor c = new_car();
    c.first_frame = 0;
    c.positions.assign(static_cast<std::size_t>(s_.frame_count), top_left);
    s_.cars.push_back(std::move(c));
  }

  /// Entry frame of a car that cruises along `lane` and is at top-left x = x_at when frame == f.
  [[nodiscard]] std::int64_t entry_for(const Lane& lane, double x_at, std::int64_t f) const {
    return f - static_cast<std::int64_t>(std::ceil((x_at + kCarW) / lane.speed));
  }

  /// Cruising car entering at the left edge; optional lateral bump of `bump` pixels over `bump_len` frames.
  void cruise(int lane_idx, std::int64_t enter, std::int64_t bump_frame = -1, double bump = 0.0, int bump_len = 18) {
    const Lane& lane = s_.lanes[static_cast<std::size_t>(lane_idx)];
    CarActor c = new_car();
    c.first_frame = std::max<std::int64_t>(enter, 0);
    for (std::int64_t f = c.first_frame; f < s_.frame_count; ++f) {
      const double x = -kCarW + lane.speed * static_cast<double>(f - enter);
      if (x > s_.width) break;
      double y = lane.y_at(x + kCarW / 2) - kCarH / 2;
      if (bump_frame >= 0 && f >= bump_frame && f <= bump_frame + bump_len) {
        y += bump * std::sin(std::numbers::pi * static_cast<double>(f - bump_frame) / bump_len);
      }
      c.positions.emplace_back(x, y);
    }
    if (!c.positions.empty()) s_.cars.push_back(std::move(c));
  }

  /// Regular traffic in one lane: entries in [from, until) with random headways, skipping entries
  /// closer than the minimum headway to any reserved entry.
  void traffic(int lane_idx, std::int64_t from, std::int64_t until, double min_headway_s, double max_headway_s,
               const std::vector<std::int64_t>& reserved = {}) {
    std::uniform_real_distribution<double> gap(min_headway_s, max_headway_s);
    const std::int64_t min_gap = frames(min_headway_s);
    std::int64_t f = from + frames(gap(rng_) * 0.5);
    while (f < until) {
      const bool clash = std::any_of(reserved.begin(), reserved.end(),
                                     [&](std::int64_t r) { return std::abs(r - f) < min_gap; });
      if (!clash) cruise(lane_idx, f);
      f += frames(gap(rng_));
    }
  }

  /// Vehicle that decelerates over `decel_s` and stops with top-left x = x_stop at `stop_frame`;
  /// returns its entry frame.
  std::int64_t stalled(int lane_idx, std::int64_t stop_frame, double x_stop, double decel_s = 1.0) {
    const Lane& lane = s_.lanes[static_cast<std::size_t>(lane_idx)];
    const double T = static_cast<double>(frames(decel_s));
    const double v = lane.speed;
    auto dist = [&](double tau) { return tau <= T ? v * tau * tau / (2 * T) : v * T / 2 + v * (tau - T); };
    std::int64_t tau = 0;
    while (x_stop - dist(static_cast<double>(tau)) >= -kCarW) ++tau;
    CarActor c = new_car();
    c.first_frame = stop_frame - tau + 1;
    for (std::int64_t f = c.first_frame; f < s_.frame_count; ++f) {
      const double x = x_stop - dist(static_cast<double>(std::max<std::int64_t>(stop_frame - f, 0)));
      c.positions.emplace_back(x, lane.y_at(x + kCarW / 2) - kCarH / 2);
    }
    add_truth(c, static_cast<double>(stop_frame) / s_.fps);
    const std::int64_t entry = c.first_frame;
    s_.cars.push_back(std::move(c));
    return entry;
  }

  /// Swerve of 8 px/frame sideways for 5 frames starting at swerve_frame, then a uniform
  /// deceleration to a stop `stop_s` later with top-left x = x_stop. Returns the entry frame.
  std::int64_t crashing(int lane_idx, std::int64_t swerve_frame, double x_stop, double direction, double stop_s = 4.0) {
    const Lane& lane = s_.lanes[static_cast<std::size_t>(lane_idx)];
    const double v = lane.speed;
    const double T = static_cast<double>(frames(stop_s));
    const double x_c = x_stop - v * T / 2;
    const std::int64_t enter = entry_for(lane, x_c, swerve_frame);
    CarActor c = new_car();
    c.first_frame = enter;
    for (std::int64_t f = enter; f < s_.frame_count; ++f) {
      const double tau = static_cast<double>(f - swerve_frame);
      double x;
      if (tau <= 0) {
        x = x_c + v * tau;
      } else if (tau <= T) {
        x = x_c + v * tau - v * tau * tau / (2 * T);
      } else {
        x = x_stop;
      }
      const double lateral = direction * 8.0 * std::clamp(tau, 0.0, 5.0);
      c.positions.emplace_back(x, lane.y_at(x + kCarW / 2) - kCarH / 2 + lateral);
    }
    add_truth(c, static_cast<double>(swerve_frame) / s_.fps);
    s_.cars.push_back(std::move(c));
    return enter;
  }

  Scenario finish() {
    std::stable_sort(s_.cars.begin(), s_.cars.end(), [](const CarActor& a, const CarActor& b) { return a.id < b.id; });
    s_.validate();
    return std::move(s_);
  }

 private:
  CarActor new_car() {
    CarActor c;
    c.id = next_id_++;
    c.width = kCarW;
    c.height = kCarH;
    return c;
  }

  void add_truth(const CarActor& c, double seconds) {
    s_.truth_seconds.push_back(seconds);
    s_.truth_boxes.push_back(*c.box_at(c.last_frame()));
  }

  void paint_grass() {
    for (int y = 0; y < s_.height; ++y) {
      for (int x = 0; x < s_.width; ++x) {
        const int cell = static_cast<int>(hash3(s_.seed, 11, static_cast<std::uint64_t>((y / 8) * 1024 + x / 8)) % 25) - 12;
        const int fine = static_cast<int>(hash3(s_.seed, 12, static_cast<std::uint64_t>(y * 4096 + x)) % 21) - 10;
        s_.backdrop(y, x) = static_cast<std::uint8_t>(75 + cell + fine);
      }
    }
  }

  void paint_road(int y, int x) {
    s_.backdrop(y, x) = static_cast<std::uint8_t>(85 + static_cast<int>(hash3(s_.seed, 13, static_cast<std::uint64_t>(y * 4096 + x)) % 7) - 3);
    s_.road(y, x) = 1;
  }

  Scenario s_;
  std::mt19937_64 rng_;
  int next_id_ = 1;
};

std::string numbered(std::string_view base, int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*s%02d", static_cast<int>(base.size()), base.data(), n);
  return buf;
}

Scenario stall_preset(int v) {
  // Stop instants sit at varied offsets from the 4 s background sampling grid, avoiding offsets
  // where the model's ~2 s emergence would land right on a sample.
  constexpr double kPhase[] = {0.0, 1.0, 3.0, 0.5, 3.5};
  StallSpec spec;
  spec.video_id = numbered("stall", v + 1);
  spec.stop_s = 28.0 + 8.0 * v + kPhase[v % 5];
  spec.length_s = spec.stop_s + 75.0;
  spec.lane = v % 4;
  spec.x_stop = 250.0 + 45.0 * (v % 9);
  spec.seed = 1000 + static_cast<std::uint64_t>(v);
  return make_stall(spec);
}

Scenario crash_preset(int v) {
  CrashSpec spec;
  spec.video_id = numbered("crash", v + 1);
  spec.swerve_s = 40.0 + 9.0 * v;
  spec.length_s = spec.swerve_s + 80.0;
  spec.downward = v % 2 == 0;
  spec.x_stop = 560.0 + 20.0 * v;
  spec.seed = 2000 + static_cast<std::uint64_t>(v);
  return make_crash(spec);
}

Scenario normal_preset(int v) {
  Builder b(numbered("normal", v + 1), 120.0, 3000 + static_cast<std::uint64_t>(v));
  b.straight_road(4, 160.0);
  for (int l = 0; l < 4; ++l) b.traffic(l, 1, b.scenario().frame_count, 5.0, 10.0);
  return b.finish();
}

Scenario parking_preset(int v) {
  Builder b(numbered("parking", v + 1), 120.0, 4000 + static_cast<std::uint64_t>(v));
  b.straight_road(4, 160.0);
  b.parking_lot({480, 320, 720, 400});
  b.parked_car({560.0, 345.0});
  for (int l = 0; l < 4; ++l) b.traffic(l, 1, b.scenario().frame_count, 5.0, 10.0);
  return b.finish();
}

Scenario curved_preset(int v) {
  Builder b(numbered("curved", v + 1), 140.0, 5000 + static_cast<std::uint64_t>(v));
  b.curved_road(205.0, 60.0, 240.0);
  const std::int64_t stop = b.frames(50.0);
  const std::int64_t entry = b.stalled(0, stop, 420.0);
  // Steady traffic until the stalled vehicle blocks the road.
  b.traffic(0, 1, entry - b.frames(2.5), 2.5, 3.5);
  return b.finish();
}

Scenario shake_preset(int v) {
  Builder b(numbered("shake", v + 1), 60.0, 6000 + static_cast<std::uint64_t>(v));
  b.straight_road(4, 160.0);
  for (int l = 0; l < 4; ++l) b.traffic(l, 1, b.scenario().frame_count, 5.0, 10.0);
  for (int k = 0; k < 5; ++k) b.scenario().shakes.push_back({b.frames(10.0 + 9.0 * k), 6, 4, 40});
  return b.finish();
}

Scenario two_lane_preset(int v) {
  Builder b(numbered("twolane", v + 1), 90.0, 7000 + static_cast<std::uint64_t>(v));
  b.straight_road(2, 190.0);
  for (int l = 0; l < 2; ++l) b.traffic(l, 1, b.scenario().frame_count, 4.0, 8.0);
  return b.finish();
}

}  // namespace

Scenario make_stall(const StallSpec& spec) {
  if (spec.lane < 0 || spec.lane > 3) throw ScenarioError("stall lane must be in [0, 3]");
  if (spec.stop_s <= 0 || spec.stop_s >= spec.length_s) throw ScenarioError("stall time outside the video");
  Builder b(spec.video_id, spec.length_s, spec.seed);
  b.straight_road(4, 160.0);
  const std::int64_t entry = b.stalled(spec.lane, b.frames(spec.stop_s), spec.x_stop);
  const std::int64_t end = b.scenario().frame_count;
  for (int l = 0; l < 4; ++l) {
    b.traffic(l, 1, l == spec.lane ? entry - b.frames(4.0) : end, 6.0, 11.0);
  }
  return b.finish();
}

Scenario make_crash(const CrashSpec& spec) {
  if (spec.swerve_s <= 0 || spec.swerve_s + spec.stop_after_s >= spec.length_s) {
    throw ScenarioError("crash times outside the video");
  }
  Builder b(spec.video_id, spec.length_s, spec.seed);
  b.straight_road(4, 160.0);
  // The crash leaves lane 1 downward or lane 2 upward; the lane it enters is cleared beforehand.
  const int lane = spec.downward ? 1 : 2;
  const int target = spec.downward ? 2 : 1;
  const std::int64_t swerve = b.frames(spec.swerve_s);
  const std::int64_t entry = b.crashing(lane, swerve, spec.x_stop, spec.downward ? 1.0 : -1.0, spec.stop_after_s);

  // Two neighbours dodge at the same instant, one ahead in lane 0 and one behind in lane 3.
  const double x_c = spec.x_stop - 3.0 * b.frames(spec.stop_after_s) / 2;
  const std::int64_t dodge0 = b.entry_for(b.scenario().lanes[0], x_c + 110.0, swerve);
  const std::int64_t dodge3 = b.entry_for(b.scenario().lanes[3], x_c - 110.0, swerve);
  b.cruise(0, dodge0, swerve, 22.0);
  b.cruise(3, dodge3, swerve, -22.0);

  const std::int64_t end = b.scenario().frame_count;
  b.traffic(0, 1, end, 6.0, 11.0, {dodge0});
  b.traffic(3, 1, end, 6.0, 11.0, {dodge3});
  b.traffic(lane, 1, entry - b.frames(4.0), 6.0, 11.0);
  b.traffic(target, 1, entry - b.frames(4.0), 6.0, 11.0);
  return b.finish();
}

std::vector<std::string> preset_names() { return {"stall", "crash", "normal", "parking", "curved", "shake", "two-lane"}; }

int preset_variants(std::string_view name) {
  if (name == "stall") return 10;
  if (name == "crash") return 5;
  return 1;
}

Scenario make_preset(std::string_view name, int variant) {
  if (variant < 0 || variant >= preset_variants(name)) {
    throw ScenarioError("preset '" + std::string(name) + "' has no variant " + std::to_string(variant));
  }
  if (name == "stall") return stall_preset(variant);
  if (name == "crash") return crash_preset(variant);
  if (name == "normal") return normal_preset(variant);
  if (name == "parking") return parking_preset(variant);
  if (name == "curved") return curved_preset(variant);
  if (name == "shake") return shake_preset(variant);
  if (name == "two-lane") return two_lane_preset(variant);
  throw ScenarioError("unknown preset '" + std::string(name) + "'");
}

}  // namespace stalltrace
