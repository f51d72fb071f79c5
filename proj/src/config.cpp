#include "stalltrace/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "stalltrace/text.hpp"

namespace stalltrace {

namespace {

struct Field {
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, std::string_view)> set;
};

std::string to_text(double v) { return format_double(v); }
std::string to_text(int v) { return std::to_string(v); }
std::string to_text(long v) { return std::to_string(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(const std::filesystem::path& v) { return v.string(); }
std::string to_text(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

void from_text(std::string_view s, double& v) { v = parse_double(s); }
void from_text(std::string_view s, int& v) {
  const std::int64_t x = parse_int(s);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) throw Error("integer out of range");
  v = static_cast<int>(x);
}
void from_text(std::string_view s, long& v) { v = static_cast<long>(parse_int(s)); }
void from_text(std::string_view s, bool& v) {
  if (s == "true" || s == "1") {
    v = true;
  } else if (s == "false" || s == "0") {
    v = false;
  } else {
    throw Error("expected true or false, got '" + std::string(s) + "'");
  }
}
void from_text(std::string_view s, std::filesystem::path& v) { v = std::filesystem::path(std::string(s)); }
void from_text(std::string_view s, std::vector<int>& v) {
  v.clear();
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string_view item = trim(s.substr(pos, comma == std::string_view::npos ? s.npos : comma - pos));
    if (!item.empty()) {
      int x = 0;
      from_text(item, x);
      v.push_back(x);
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
}

template <typename T>
Field field(std::string key, T PipelineConfig::*group, auto member) {
  return Field{std::move(key), [=](const PipelineConfig& c) { return to_text((c.*group).*member); },
               [=](PipelineConfig& c, std::string_view s) { from_text(s, (c.*group).*member); }};
}

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> all = {
      field("background.max_components", &C::background, &BackgroundParams::max_components),
      field("background.history", &C::background, &BackgroundParams::history),
      field("background.var_threshold", &C::background, &BackgroundParams::var_threshold),
      field("background.background_ratio", &C::background, &BackgroundParams::background_ratio),
      field("background.var_init", &C::background, &BackgroundParams::var_init),
      field("background.var_min", &C::background, &BackgroundParams::var_min),
      field("background.var_max", &C::background, &BackgroundParams::var_max),
      field("background.sample_interval", &C::background, &BackgroundParams::sample_interval),

      field("detector.intensity_threshold", &C::detector, &RectDetectorParams::intensity_threshold),
      field("detector.min_area", &C::detector, &RectDetectorParams::min_area),

      Field{"roadmask.k", [](const C& c) { return to_text(c.roadmask.motion.k); },
            [](C& c, std::string_view s) { from_text(s, c.roadmask.motion.k); }},
      Field{"roadmask.t1_fraction", [](const C& c) { return to_text(c.roadmask.motion.t1_fraction); },
            [](C& c, std::string_view s) { from_text(s, c.roadmask.motion.t1_fraction); }},
      Field{"roadmask.t2", [](const C& c) { return to_text(c.roadmask.motion.t2); },
            [](C& c, std::string_view s) { from_text(s, c.roadmask.motion.t2); }},
      Field{"roadmask.binarize_thresh", [](const C& c) { return to_text(c.roadmask.motion.binarize_thresh); },
            [](C& c, std::string_view s) { from_text(s, c.roadmask.motion.binarize_thresh); }},
      Field{"roadmask.area_filter", [](const C& c) { return to_text(c.roadmask.motion.area_filter); },
            [](C& c, std::string_view s) { from_text(s, c.roadmask.motion.area_filter); }},
      field("roadmask.min_hits", &C::roadmask, &RoadMaskParams::min_hits),
      field("roadmask.dilate_iters", &C::roadmask, &RoadMaskParams::dilate_iters),
      field("roadmask.erode_iters", &C::roadmask, &RoadMaskParams::erode_iters),
      field("roadmask.kernel_size", &C::roadmask, &RoadMaskParams::kernel_size),

      field("tracker.gate_iou", &C::tracker, &BoxTrackerParams::gate_iou),
      field("tracker.min_hits", &C::tracker, &BoxTrackerParams::min_hits),
      field("tracker.max_age", &C::tracker, &BoxTrackerParams::max_age),

      field("criteria.min_duration_s", &C::criteria, &AnomalyCriteria::min_duration_s),
      field("criteria.window_s", &C::criteria, &AnomalyCriteria::window_s),
      field("criteria.window_count", &C::criteria, &AnomalyCriteria::window_count),
      field("criteria.min_windows_present", &C::criteria, &AnomalyCriteria::min_windows_present),
      field("criteria.iou_retrieve_thresh", &C::criteria, &AnomalyCriteria::iou_retrieve_thresh),
      field("criteria.center_std_max", &C::criteria, &AnomalyCriteria::center_std_max),

      field("pixel.min_abnormal_duration_s", &C::pixel, &PixelTrackerParams::min_abnormal_duration_s),
      field("pixel.suspicious_duration_s", &C::pixel, &PixelTrackerParams::suspicious_duration_s),
      field("pixel.miss_tolerance_s", &C::pixel, &PixelTrackerParams::miss_tolerance_s),
      field("pixel.score_floor", &C::pixel, &PixelTrackerParams::score_floor),

      field("backtrack.psnr_stop", &C::backtrack, &SimilarityThresholds::psnr_stop),
      field("backtrack.ssim_stop", &C::backtrack, &SimilarityThresholds::ssim_stop),
      field("backtrack.euclid_stop", &C::backtrack, &SimilarityThresholds::euclid_stop),
      field("backtrack.psnr_avg", &C::backtrack, &SimilarityThresholds::psnr_avg),
      field("backtrack.ssim_avg", &C::backtrack, &SimilarityThresholds::ssim_avg),
      field("backtrack.euclid_avg", &C::backtrack, &SimilarityThresholds::euclid_avg),
      field("backtrack.max_backtrack_s", &C::backtrack, &SimilarityThresholds::max_backtrack_s),
      field("backtrack.roi_iou_thresh", &C::backtrack, &SimilarityThresholds::roi_iou_thresh),
      field("backtrack.max_deviation_s", &C::backtrack, &SimilarityThresholds::max_deviation_s),
      field("backtrack.psnr_weight", &C::backtrack, &SimilarityThresholds::psnr_weight),
      field("backtrack.ssim_weight", &C::backtrack, &SimilarityThresholds::ssim_weight),
      field("backtrack.euclid_weight", &C::backtrack, &SimilarityThresholds::euclid_weight),
      field("backtrack.vote_quorum", &C::backtrack, &SimilarityThresholds::vote_quorum),
      field("backtrack.stride", &C::backtrack, &SimilarityThresholds::stride),
      field("backtrack.roi_search_s", &C::backtrack, &SimilarityThresholds::roi_search_s),
      field("backtrack.fusion_iou", &C::backtrack, &SimilarityThresholds::fusion_iou),
      field("backtrack.ssim_window", &C::backtrack, &SimilarityThresholds::ssim_window),

      field("trajectory.fit_error_thresh", &C::trajectory, &CurveParams::fit_error_thresh),
      field("trajectory.min_traj_points", &C::trajectory, &CurveParams::min_traj_points),
      field("trajectory.offtrack_area_thresh", &C::trajectory, &CurveParams::offtrack_area_thresh),
      field("trajectory.offtrack_error_thresh", &C::trajectory, &CurveParams::offtrack_error_thresh),
      field("trajectory.offtrack_min_freq", &C::trajectory, &CurveParams::offtrack_min_freq),
      field("trajectory.peak_min", &C::trajectory, &CurveParams::peak_min),
      field("trajectory.platform_ratio", &C::trajectory, &CurveParams::platform_ratio),
      field("trajectory.interval_count", &C::trajectory, &CurveParams::interval_count),
      field("trajectory.interval_s", &C::trajectory, &CurveParams::interval_s),
      field("trajectory.lead_s", &C::trajectory, &CurveParams::lead_s),

      field("flow.points", &C::flow, &FlowParams::points),
      field("flow.trace_len", &C::flow, &FlowParams::trace_len),
      field("flow.knn_k", &C::flow, &FlowParams::knn_k),
      field("flow.density_thresh", &C::flow, &FlowParams::density_thresh),
      field("flow.suppress_ranks", &C::flow, &FlowParams::suppress_ranks),
      field("flow.neighbor_len", &C::flow, &FlowParams::neighbor_len),
      field("flow.window_len", &C::flow, &FlowParams::window_len),
      field("flow.scale", &C::flow, &FlowParams::scale),
      field("flow.drastic_ratio", &C::flow, &FlowParams::drastic_ratio),
      field("flow.seed_min_distance", &C::flow, &FlowParams::seed_min_distance),
      Field{"flow.lk_window", [](const C& c) { return to_text(c.flow.lk.window); },
            [](C& c, std::string_view s) { from_text(s, c.flow.lk.window); }},
      Field{"flow.lk_levels", [](const C& c) { return to_text(c.flow.lk.levels); },
            [](C& c, std::string_view s) { from_text(s, c.flow.lk.levels); }},
      Field{"flow.lk_min_eig", [](const C& c) { return to_text(c.flow.lk.min_eig); },
            [](C& c, std::string_view s) { from_text(s, c.flow.lk.min_eig); }},
      Field{"flow.lk_max_iters", [](const C& c) { return to_text(c.flow.lk.max_iters); },
            [](C& c, std::string_view s) { from_text(s, c.flow.lk.max_iters); }},
      Field{"flow.lk_epsilon", [](const C& c) { return to_text(c.flow.lk.epsilon); },
            [](C& c, std::string_view s) { from_text(s, c.flow.lk.epsilon); }},

      field("eval.match_window_s", &C::eval, &EvalParams::match_window_s),
      field("eval.norm_s", &C::eval, &EvalParams::norm_s),

      field("pipeline.dynamic_stage", &C::pipeline, &PipelineOptions::dynamic_stage),
      field("pipeline.arbitration_s", &C::pipeline, &PipelineOptions::arbitration_s),
      field("pipeline.offtrack_confidence_factor", &C::pipeline, &PipelineOptions::offtrack_confidence_factor),
      field("pipeline.cache_dir", &C::pipeline, &PipelineOptions::cache_dir),
      field("pipeline.write_background", &C::pipeline, &PipelineOptions::write_background),
      field("pipeline.dump_series", &C::pipeline, &PipelineOptions::dump_series),

      field("paths.manifest", &C::paths, &PipelinePaths::manifest),
      field("paths.original_detections", &C::paths, &PipelinePaths::original_detections),
      field("paths.background_detections", &C::paths, &PipelinePaths::background_detections),
      field("paths.ground_truth", &C::paths, &PipelinePaths::ground_truth),
      field("paths.output_dir", &C::paths, &PipelinePaths::output_dir),
  };
  return all;
}

const Field& find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return f;
  }
  throw Error("unknown config key '" + key + "'");
}

}  // namespace

void PipelineConfig::validate() const {
  background.validate();
  pixel.validate();
  backtrack.validate();
  flow.validate();
  if (roadmask.motion.k < 1) throw Error("roadmask.k must be >= 1");
  if (roadmask.motion.t2 < 0) throw Error("roadmask.t2 must be >= 0");
  if (roadmask.kernel_size < 1) throw Error("roadmask.kernel_size must be >= 1");
  if (criteria.min_windows_present > criteria.window_count) {
    throw Error("criteria.min_windows_present must not exceed criteria.window_count");
  }
  if (trajectory.interval_count < 1 || trajectory.interval_s <= 0) throw Error("trajectory: bad interval layout");
  if (eval.match_window_s < 0 || eval.norm_s <= 0) throw Error("eval: bad match window or normaliser");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

std::string config_value(const PipelineConfig& cfg, const std::string& key) { return find_field(key).get(cfg); }

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const Field& f = find_field(key);
  try {
    f.set(cfg, trim(value));
  } catch (const Error& e) {
    throw Error("config key '" + key + "': " + e.what());
  }
}

PipelineConfig parse_config(std::string_view text, const std::string& origin) {
  PipelineConfig cfg;
  for (const auto& [k, v] : parse_key_values(text, origin)) {
    try {
      set_config_value(cfg, k, v);
    } catch (const Error& e) {
      throw Error(origin + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  std::string group;
  for (const Field& f : fields()) {
    const std::string g = f.key.substr(0, f.key.find('.'));
    if (g != group) {
      if (!group.empty()) out += '\n';
      out += "# " + g + "\n";
      group = g;
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

void write_config(const std::filesystem::path& path, const PipelineConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write config " + path.string());
  out << format_config(cfg);
}

}  // namespace stalltrace
