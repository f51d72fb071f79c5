#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "stalltrace/config.hpp"
#include "stalltrace/evaluation.hpp"
#include "stalltrace/overlay.hpp"
#include "stalltrace/pipeline.hpp"
#include "stalltrace/scenario.hpp"

namespace st = stalltrace;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Key-value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "Override one key, e.g. --set backtrack.psnr_stop=13");
}

st::PipelineConfig resolve_config(const CommonOptions& o) {
  st::PipelineConfig cfg = o.config.empty() ? st::PipelineConfig{} : st::load_config(o.config);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw st::Error("--set expects key=value, got `" + kv + "`");
    st::set_config_value(cfg, std::string(st::trim(kv.substr(0, eq))), std::string(st::trim(kv.substr(eq + 1))));
  }
  cfg.validate();
  return cfg;
}

struct VideoJob {
  std::filesystem::path manifest;
  std::filesystem::path detections;
  std::filesystem::path background;
};

/// Detections default to detections_original.txt beside the manifest.
std::vector<VideoJob> make_jobs(const std::vector<std::string>& manifests, const std::vector<std::string>& detections,
                                const std::vector<std::string>& background) {
  if (!detections.empty() && detections.size() != manifests.size()) {
    throw st::Error("--detections must be given once per --manifest");
  }
  if (!background.empty() && background.size() != manifests.size()) {
    throw st::Error("--background-detections must be given once per --manifest");
  }
  std::vector<VideoJob> jobs;
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    VideoJob j;
    j.manifest = manifests[i];
    j.detections = detections.empty() ? j.manifest.parent_path() / "detections_original.txt"
                                      : std::filesystem::path(detections[i]);
    if (!background.empty()) j.background = background[i];
    jobs.push_back(std::move(j));
  }
  return jobs;
}

struct Loaded {
  st::ManifestFrameSource frames;
  st::DetectionSet original;
  std::optional<st::DetectionSet> background;
};

Loaded load_job(const VideoJob& j) {
  st::VideoManifest m = st::load_manifest(j.manifest);
  Loaded l{st::ManifestFrameSource(m), st::load_detections(j.detections, st::DetectionSource::original, m.frame_count),
           std::nullopt};
  if (!j.background.empty()) {
    l.background = st::load_detections(j.background, st::DetectionSource::background, m.frame_count);
  }
  return l;
}

/// Per-video copy of the config: outputs and caches go to per-video subdirectories when
/// several videos share one invocation.
st::PipelineConfig job_config(const st::PipelineConfig& base, const std::string& video_id, bool multi) {
  st::PipelineConfig cfg = base;
  if (multi) {
    cfg.paths.output_dir /= video_id;
    if (!cfg.pipeline.cache_dir.empty()) cfg.pipeline.cache_dir /= video_id;
  }
  return cfg;
}

int cmd_run(const CommonOptions& common, const std::vector<std::string>& manifests,
            const std::vector<std::string>& detections, const std::vector<std::string>& background,
            const std::string& out, bool no_dynamic, int jobs_n) {
  st::PipelineConfig base = resolve_config(common);
  std::vector<std::string> ms = manifests;
  if (ms.empty() && !base.paths.manifest.empty()) ms.push_back(base.paths.manifest.string());
  if (ms.empty()) throw st::Error("no manifest given (--manifest or paths.manifest)");
  std::vector<std::string> ds = detections;
  if (ds.empty() && !base.paths.original_detections.empty() && ms.size() == 1) {
    ds.push_back(base.paths.original_detections.string());
  }
  std::vector<std::string> bs = background;
  if (bs.empty() && !base.paths.background_detections.empty() && ms.size() == 1) {
    bs.push_back(base.paths.background_detections.string());
  }
  if (!out.empty()) base.paths.output_dir = out;
  if (no_dynamic) base.pipeline.dynamic_stage = false;

  const std::vector<VideoJob> jobs = make_jobs(ms, ds, bs);
  const bool multi = jobs.size() > 1;
  std::vector<std::vector<st::AnomalyEvent>> events(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        Loaded l = load_job(jobs[i]);
        const st::PipelineConfig cfg = job_config(base, l.frames.manifest().video_id, multi);
        const st::PipelineResult r =
            st::run_pipeline(l.frames, l.original, l.background ? &*l.background : nullptr, cfg);
        st::write_results(cfg.paths.output_dir, r, cfg);
        events[i] = r.events;
        std::lock_guard lock(log_mu);
        std::cerr << l.frames.manifest().video_id << ": " << r.events.size() << " event(s)"
                  << (r.cache_hit ? " (cached first pass)" : "") << '\n';
      } catch (const std::exception& e) {
        errors[i] = jobs[i].manifest.string() + ": " + e.what();
      }
    }
  };
  const int n = std::clamp<int>(jobs_n, 1, static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  int status = 0;
  for (const std::string& e : errors) {
    if (!e.empty()) {
      std::cerr << "error: " << e << '\n';
      status = 1;
    }
  }
  if (multi) {
    std::vector<st::Prediction> all;
    for (const auto& ev : events) {
      for (const st::Prediction& p : st::to_predictions(ev)) all.push_back(p);
    }
    std::filesystem::create_directories(base.paths.output_dir);
    st::write_predictions(base.paths.output_dir / "results.txt", all);
  }
  if (!base.paths.ground_truth.empty()) {
    const auto preds = st::load_predictions(base.paths.output_dir / "results.txt");
    st::write_report(std::cout, preds, st::load_ground_truth(base.paths.ground_truth), base.eval.match_window_s,
                     base.eval.norm_s);
  }
  return status;
}

int cmd_score(const CommonOptions& common, const std::string& predictions, const std::string& truth) {
  const st::PipelineConfig cfg = resolve_config(common);
  const std::string gt = truth.empty() ? cfg.paths.ground_truth.string() : truth;
  if (gt.empty()) throw st::Error("no ground truth given (--truth or paths.ground_truth)");
  st::write_report(std::cout, st::load_predictions(predictions), st::load_ground_truth(gt), cfg.eval.match_window_s,
                   cfg.eval.norm_s);
  return 0;
}

int cmd_synth(const CommonOptions& common, const std::string& preset, int variant, bool all_variants,
              const std::string& out, const std::optional<st::StallSpec>& custom) {
  resolve_config(common);
  if (custom) {
    if (preset != "stall" || all_variants) throw st::Error("--stop and --length only apply to a single stall scenario");
    const st::Scenario s = st::make_stall(*custom);
    st::generate_scenario(s, out);
    std::cerr << s.video_id << ": " << s.frame_count << " frames -> " << out << '\n';
    return 0;
  }
  const int count = st::preset_variants(preset);
  const int first = all_variants ? 0 : variant;
  const int last = all_variants ? count - 1 : variant;
  std::vector<st::GroundTruth> truth;
  for (int v = first; v <= last; ++v) {
    const st::Scenario s = st::make_preset(preset, v);
    const std::filesystem::path dir = all_variants ? std::filesystem::path(out) / s.video_id : std::filesystem::path(out);
    st::generate_scenario(s, dir);
    for (const st::GroundTruth& g : st::ground_truth(s)) truth.push_back(g);
    std::cerr << s.video_id << ": " << s.frame_count << " frames -> " << dir.string() << '\n';
  }
  if (all_variants) st::write_ground_truth(std::filesystem::path(out) / "ground_truth.txt", truth);
  return 0;
}

int cmd_mask(const CommonOptions& common, const std::string& manifest, const std::string& detections,
             const std::string& out) {
  st::PipelineConfig cfg = resolve_config(common);
  cfg.pipeline.dynamic_stage = false;
  const std::string m = manifest.empty() ? cfg.paths.manifest.string() : manifest;
  if (m.empty()) throw st::Error("no manifest given (--manifest or paths.manifest)");
  const auto jobs = make_jobs({m}, detections.empty() ? std::vector<std::string>{} : std::vector{detections}, {});
  Loaded l = load_job(jobs.front());
  const st::PipelineResult r = st::run_pipeline(l.frames, l.original, nullptr, cfg);
  st::write_gray(out, st::Mask(r.road_mask.mask() * 255));
  std::cerr << "road pixels: " << r.road_mask.mask().cast<long>().sum() << '\n';
  return 0;
}

int cmd_overlay(const CommonOptions& common, const std::string& manifest, const std::string& detections,
                const std::string& out, const st::OverlayOptions& options) {
  const st::PipelineConfig cfg = resolve_config(common);
  const std::string m = manifest.empty() ? cfg.paths.manifest.string() : manifest;
  if (m.empty()) throw st::Error("no manifest given (--manifest or paths.manifest)");
  const auto jobs = make_jobs({m}, detections.empty() ? std::vector<std::string>{} : std::vector{detections}, {});
  Loaded l = load_job(jobs.front());
  const st::PipelineResult r = st::run_pipeline(l.frames, l.original, nullptr, cfg);
  st::emit_overlays(l.frames, r.events, r.original_tracks, out, options, r.traces);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stalled-vehicle and crash anomaly detection for fixed traffic cameras"};
  app.require_subcommand(1);

  CommonOptions run_o, score_o, synth_o, mask_o, overlay_o, config_o;

  auto* run = app.add_subcommand("run", "Run the full pipeline on one or more videos");
  add_common(run, run_o);
  std::vector<std::string> run_manifests, run_dets, run_bg;
  std::string run_out;
  bool no_dynamic = false;
  int jobs_n = 1;
  run->add_option("--manifest", run_manifests, "Video manifest (repeatable)");
  run->add_option("--detections", run_dets, "Original-stream detections, one per manifest");
  run->add_option("--background-detections", run_bg, "Background-stream detections, one per manifest");
  run->add_option("--out", run_out, "Output directory (overrides paths.output_dir)");
  run->add_flag("--no-dynamic", no_dynamic, "Skip the dynamic stage (ablation)");
  run->add_option("--jobs", jobs_n, "Videos processed in parallel")->check(CLI::PositiveNumber);

  auto* score = app.add_subcommand("score", "Score predictions against ground truth");
  add_common(score, score_o);
  std::string preds, truth;
  score->add_option("--predictions", preds, "`video_id start_s [confidence]` lines")->required();
  score->add_option("--truth", truth, "Ground truth (overrides paths.ground_truth)");

  auto* synth = app.add_subcommand("synth", "Render a synthetic scenario");
  add_common(synth, synth_o);
  std::string preset = "stall", synth_out = "synth";
  int variant = 0;
  bool all_variants = false;
  synth->add_option("--preset", preset, "stall, crash, normal, parking, curved, shake or two-lane");
  synth->add_option("--variant", variant, "Preset variant index");
  synth->add_flag("--all", all_variants, "Render every variant into per-video subdirectories");
  synth->add_option("--out", synth_out, "Output directory");
  double stall_stop = 0, stall_length = 0;
  auto* stop_opt = synth->add_option("--stop", stall_stop, "Custom stall: stop time in seconds")->check(CLI::PositiveNumber);
  synth->add_option("--length", stall_length, "Custom stall: video length in seconds")->needs(stop_opt);
  stop_opt->needs(synth->get_option("--length"));

  auto* mask = app.add_subcommand("mask", "Build and write the road mask");
  add_common(mask, mask_o);
  std::string mask_manifest, mask_dets, mask_out = "road_mask.pgm";
  mask->add_option("--manifest", mask_manifest, "Video manifest");
  mask->add_option("--detections", mask_dets, "Original-stream detections");
  mask->add_option("--out", mask_out, "Output PGM");

  auto* overlay = app.add_subcommand("overlay", "Draw tracks and events onto frames");
  add_common(overlay, overlay_o);
  std::string ov_manifest, ov_dets, ov_out = "overlay";
  st::OverlayOptions ov;
  overlay->add_option("--manifest", ov_manifest, "Video manifest");
  overlay->add_option("--detections", ov_dets, "Original-stream detections");
  overlay->add_option("--out", ov_out, "Output directory");
  overlay->add_option("--first", ov.first, "First frame");
  overlay->add_option("--last", ov.last, "Last frame, inclusive");
  overlay->add_option("--stride", ov.stride, "Frame stride")->check(CLI::PositiveNumber);
  overlay->add_option("--trail", ov.trail, "Trail length in observations");

  auto* config = app.add_subcommand("config", "Print the effective configuration");
  add_common(config, config_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_o, run_manifests, run_dets, run_bg, run_out, no_dynamic, jobs_n);
    if (*score) return cmd_score(score_o, preds, truth);
    if (*synth) {
      std::optional<st::StallSpec> custom;
      if (*stop_opt) custom = st::StallSpec{.stop_s = stall_stop, .length_s = stall_length};
      return cmd_synth(synth_o, preset, variant, all_variants, synth_out, custom);
    }
    if (*mask) return cmd_mask(mask_o, mask_manifest, mask_dets, mask_out);
    if (*overlay) return cmd_overlay(overlay_o, ov_manifest, ov_dets, ov_out, ov);
    if (*config) {
      std::cout << st::format_config(resolve_config(config_o));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
