#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stalltrace/background_model.hpp"
#include "stalltrace/box_tracker.hpp"
#include "stalltrace/detector.hpp"
#include "stalltrace/flow_tracer.hpp"
#include "stalltrace/multi_trajectory.hpp"
#include "stalltrace/pixel_tracker.hpp"
#include "stalltrace/road_mask.hpp"
#include "stalltrace/roi_backtracker.hpp"

namespace stalltrace {

struct EvalParams {
  double match_window_s = 10.0;
  double norm_s = 300.0;
};

struct PipelineOptions {
  bool dynamic_stage = true;
  /// The flow instant wins over the trajectory instant when they are at most this far apart.
  double arbitration_s = 3.0;
  /// Each flagged off-track trajectory halves the event's remaining doubt (1 - confidence).
  double offtrack_confidence_factor = 0.5;
  std::filesystem::path cache_dir;
  bool write_background = false;
  bool dump_series = true;
};

struct PipelinePaths {
  std::filesystem::path manifest;
  std::filesystem::path original_detections;
  std::filesystem::path background_detections;
  std::filesystem::path ground_truth;
  std::filesystem::path output_dir = "out";
};

struct PipelineConfig {
  BackgroundParams background;
  RectDetectorParams detector;
  RoadMaskParams roadmask;
  BoxTrackerParams tracker;
  AnomalyCriteria criteria;
  PixelTrackerParams pixel;
  SimilarityThresholds backtrack;
  CurveParams trajectory;
  FlowParams flow;
  EvalParams eval;
  PipelineOptions pipeline;
  PipelinePaths paths;

  void validate() const;
};

/// Every dotted key, in file order.
std::vector<std::string> config_keys();
std::string config_value(const PipelineConfig& cfg, const std::string& key);
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// Defaults overlaid with the given text; unknown keys and bad values are errors.
PipelineConfig parse_config(std::string_view text, const std::string& origin = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);
std::string format_config(const PipelineConfig& cfg);
void write_config(const std::filesystem::path& path, const PipelineConfig& cfg);

}  // namespace stalltrace
