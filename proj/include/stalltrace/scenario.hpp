#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "stalltrace/ingest.hpp"

namespace stalltrace {

class ScenarioError : public Error {
 public:
  using Error::Error;
};

/// A rendered rectangle vehicle; positions[i] is the top-left corner at frame first_frame + i.
struct CarActor {
  int id = 0;
  double width = 60.0;
  double height = 28.0;
  int body = 215;
  std::int64_t first_frame = 0;
  std::vector<Eigen::Vector2d> positions;

  [[nodiscard]] std::int64_t last_frame() const { return first_frame + static_cast<std::int64_t>(positions.size()) - 1; }
  /// Rendered box (integer corners) at frame f, if the car exists then.
  [[nodiscard]] std::optional<BBox> box_at(std::int64_t f) const;
};

struct ShakeEvent {
  std::int64_t frame = 0;
  int dx = 0;
  int dy = 0;
  int brightness = 0;
};

/// Lane centre line y(x) = y_center + amplitude * sin(2 pi x / wavelength).
struct Lane {
  double y_center = 0.0;
  double amplitude = 0.0;
  double wavelength = 1.0;
  double speed = 3.0;

  [[nodiscard]] double y_at(double x) const;
};

struct Scenario {
  std::string video_id = "synth01";
  int width = 800;
  int height = 410;
  double fps = 30.0;
  std::int64_t frame_count = 0;
  std::uint64_t seed = 1;

  ImageU8 backdrop;
  /// Ground-truth drivable region as rendered.
  Mask road;
  std::vector<Lane> lanes;
  std::vector<CarActor> cars;
  std::vector<ShakeEvent> shakes;

  int noise_amplitude = 2;
  double detection_jitter = 0.3;
  double detection_dropout = 0.02;

  std::vector<double> truth_seconds;
  /// Final box of each anomalous vehicle, parallel to truth_seconds.
  std::vector<BBox> truth_boxes;

  [[nodiscard]] VideoManifest manifest() const;
  /// Throws ScenarioError when an actor that must be visible lies outside the frame.
  void validate() const;
};

ImageU8 render_frame(const Scenario& s, std::int64_t frame_idx);

/// Rendered rectangles clipped to the frame, with jitter and dropout.
DetectionSet original_detections(const Scenario& s);

std::vector<GroundTruth> ground_truth(const Scenario& s);

class SyntheticFrameSource : public FrameSource {
 public:
  explicit SyntheticFrameSource(const Scenario& s) : scenario_(&s), manifest_(s.manifest()) {}
  [[nodiscard]] const VideoManifest& manifest() const override { return manifest_; }
  [[nodiscard]] ImageU8 gray(std::int64_t idx) const override;

 private:
  const Scenario* scenario_;
  VideoManifest manifest_;
};

/// Writes manifest.txt, frames/, detections_original.txt and ground_truth.txt under `dir`.
void generate_scenario(const Scenario& s, const std::filesystem::path& dir);

/// Four-lane road with light traffic; one vehicle decelerates over 1 s and stops at stop_s.
struct StallSpec {
  std::string video_id = "synth01";
  double stop_s = 100.0;
  double length_s = 180.0;
  int lane = 1;
  /// Top-left x of the stopped vehicle.
  double x_stop = 400.0;
  std::uint64_t seed = 1;
};

/// Four-lane road; one vehicle swerves into the neighbouring lane at swerve_s (8 px/frame for
/// 5 frames) and stops stop_after_s later while vehicles in the outer lanes dodge.
struct CrashSpec {
  std::string video_id = "synth01";
  double swerve_s = 90.0;
  double stop_after_s = 4.0;
  double length_s = 180.0;
  /// Lane 1 into lane 2 when true, lane 2 into lane 1 otherwise.
  bool downward = true;
  double x_stop = 600.0;
  std::uint64_t seed = 1;
};

Scenario make_stall(const StallSpec& spec);
Scenario make_crash(const CrashSpec& spec);

/// Named layouts: stall (10 variants), crash (5), normal, parking, curved, shake, two-lane.
Scenario make_preset(std::string_view name, int variant = 0);
std::vector<std::string> preset_names();
int preset_variants(std::string_view name);

}  // namespace stalltrace
