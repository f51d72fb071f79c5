#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "stalltrace/config.hpp"
#include "stalltrace/ingest.hpp"

namespace stalltrace {

/// Dynamic-stage diagnostics for one static event.
struct DynamicTrace {
  AnomalyEvent static_event;
  TrajectoryAnalysis trajectory;
  std::optional<double> trajectory_s;
  VelocitySeries flow;
  std::optional<double> flow_s;
};

struct PipelineResult {
  std::vector<AnomalyEvent> events;
  /// Fused, backtracked events before the dynamic stage (the ablation output).
  std::vector<AnomalyEvent> static_events;
  std::vector<AnomalyEvent> coarse_pixel;
  std::vector<AnomalyEvent> coarse_box;
  std::vector<DynamicTrace> traces;
  RoadMask road_mask;
  std::vector<Track> original_tracks;
  std::vector<Track> background_tracks;
  DetectionSet background_detections{DetectionSource::background};
  long skipped_shake = 0;
  long skipped_area = 0;
  bool cache_hit = false;
};

/// Static stage then dynamic stage over one video. `background` may be null, in which case the
/// background stream is modelled here and scanned with the built-in rectangle detector.
PipelineResult run_pipeline(const FrameSource& frames, const DetectionSet& original, const DetectionSet* background,
                            const PipelineConfig& cfg);

/// Applies the dynamic stage to already fused static events.
std::vector<AnomalyEvent> refine_dynamic(std::span<const AnomalyEvent> static_events, const FrameSource& frames,
                                         std::span<const Track> original_tracks, const RoadMask& road_mask,
                                         const PipelineConfig& cfg, std::vector<DynamicTrace>* traces = nullptr);

/// Challenge lines plus a detailed record per event; N-series and velocity dumps when requested.
void write_results(const std::filesystem::path& dir, const PipelineResult& result, const PipelineConfig& cfg);

void write_event_details(const std::filesystem::path& path, std::span<const AnomalyEvent> events);

}  // namespace stalltrace
