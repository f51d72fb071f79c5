#include "stalltrace/pipeline.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "stalltrace/detector.hpp"
#include "stalltrace/evaluation.hpp"

namespace stalltrace {

namespace {

template <typename F>
auto in_stage(const char* stage, std::int64_t frame, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(std::string(stage) + (frame >= 0 ? " (frame " + std::to_string(frame) + ")" : "") + ": " + e.what());
  }
}

BoxTrackerParams tracker_params(const PipelineConfig& cfg) {
  BoxTrackerParams p = cfg.tracker;
  p.retrieve_iou = cfg.criteria.iou_retrieve_thresh;
  return p;
}

std::uint64_t fingerprint(const DetectionSet& set) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](double v) {
    std::uint64_t bits = 0;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof v);
    h = (h ^ bits) * 1099511628211ULL;
  };
  for (std::int64_t f : set.frames()) {
    for (const Detection& d : set.at(f)) {
      feed(static_cast<double>(d.frame_idx));
      feed(d.bbox.x1);
      feed(d.bbox.y1);
      feed(d.bbox.x2);
      feed(d.bbox.y2);
      feed(d.score);
    }
  }
  return h;
}

std::string cache_key(const VideoManifest& m, const DetectionSet& original, const DetectionSet* background,
                      const PipelineConfig& cfg) {
  std::ostringstream os;
  os << "video " << m.video_id << ' ' << m.width << 'x' << m.height << ' ' << m.frame_count << ' '
     << format_double(m.fps) << '\n';
  os << "original " << fingerprint(original) << '\n';
  os << "background " << (background ? std::to_string(fingerprint(*background)) : "modelled") << '\n';
  for (const std::string& k : config_keys()) {
    if (k.starts_with("background.") || k.starts_with("detector.") || k.starts_with("roadmask.") ||
        k.starts_with("tracker.") || k == "criteria.iou_retrieve_thresh") {
      os << k << " = " << config_value(cfg, k) << '\n';
    }
  }
  return os.str();
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct FirstPass {
  RoadMask road;
  std::vector<Track> original_tracks;
  DetectionSet background{DetectionSource::background};
  long skipped_shake = 0;
  long skipped_area = 0;
};

FirstPass first_pass(const FrameSource& frames, const DetectionSet& original, const DetectionSet* background,
                     const PipelineConfig& cfg) {
  const VideoManifest& m = frames.manifest();
  FirstPass out;
  const int k = cfg.roadmask.motion.k;
  std::optional<GmmBackground> gmm;
  if (!background) gmm.emplace(m.height, m.width, cfg.background);
  const std::filesystem::path bg_dir = cfg.paths.output_dir / "background";
  if (cfg.pipeline.write_background && gmm) std::filesystem::create_directories(bg_dir);

  ImageI motion_acc = ImageI::Zero(m.height, m.width);
  std::vector<ImageU8> ring(static_cast<std::size_t>(k + 1));
  BoxTracker tracker(tracker_params(cfg));
  for (std::int64_t f = 0; f < m.frame_count; ++f) {
    const ImageU8 gray = in_stage("ingest", f, [&] { return frames.gray(f); });
    if (gray.rows() != m.height || gray.cols() != m.width) {
      throw Error("ingest (frame " + std::to_string(f) + "): frame size differs from the manifest");
    }
    if (gmm) {
      in_stage("background-model", f, [&] {
        gmm->update(gray);
        if (!is_background_sample(f, cfg.background.sample_interval)) return;
        const ImageU8 bg = gmm->background_image();
        for (const Detection& d : detect_rectangles(bg, f, cfg.detector)) out.background.add(d);
        if (cfg.pipeline.write_background) {
          char name[32];
          std::snprintf(name, sizeof name, "bg_%06lld.pgm", static_cast<long long>(f));
          write_gray(bg_dir / name, bg);
        }
      });
    }
    if (f >= k) {
      const MotionUpdate u = in_stage("road-mask", f, [&] {
        return motion_mask_update(motion_acc, gray, ring[static_cast<std::size_t>((f - k) % (k + 1))],
                                  cfg.roadmask.motion);
      });
      if (u == MotionUpdate::skipped_shake) ++out.skipped_shake;
      if (u == MotionUpdate::skipped_area) ++out.skipped_area;
    }
    ring[static_cast<std::size_t>(f % (k + 1))] = gray;
    in_stage("box-tracker", f, [&] { tracker.step(original.at(f), f); });
  }
  if (background) out.background = *background;
  out.original_tracks = tracker.tracks();
  ImageI traj_acc = ImageI::Zero(m.height, m.width);
  trajectory_mask_update(traj_acc, out.original_tracks);
  out.road = in_stage("road-mask", -1, [&] { return fuse_masks(motion_acc, traj_acc, cfg.roadmask); });
  return out;
}

std::vector<std::int64_t> sample_frames(const VideoManifest& m, const DetectionSet& bg, int interval) {
  std::set<std::int64_t> frames;
  for (std::int64_t f = interval; f < m.frame_count; f += interval) frames.insert(f);
  for (std::int64_t f : bg.frames()) frames.insert(f);
  return {frames.begin(), frames.end()};
}

}  // namespace

std::vector<AnomalyEvent> refine_dynamic(std::span<const AnomalyEvent> static_events, const FrameSource& frames,
                                         std::span<const Track> original_tracks, const RoadMask& road_mask,
                                         const PipelineConfig& cfg, std::vector<DynamicTrace>* traces) {
  const double fps = frames.manifest().fps;
  std::vector<AnomalyEvent> out;
  for (const AnomalyEvent& ev : static_events) {
    DynamicTrace tr;
    tr.static_event = ev;
    const double t_a = ev.start_time.seconds;
    const std::int64_t f_a = ev.start_time.to_frame(fps);

    tr.trajectory = in_stage("multi-trajectory", f_a, [&] {
      return analyze_trajectories(original_tracks, road_mask, t_a, fps, cfg.trajectory);
    });
    if (tr.trajectory.crash_interval) {
      tr.trajectory_s = std::max(0.0, tr.trajectory.window_start_s + *tr.trajectory.crash_interval * cfg.trajectory.interval_s);
    }
    tr.flow = in_stage("flow-tracer", f_a, [&] { return backward_trace(ev.bbox, f_a, frames, cfg.flow); });
    if (const auto crash = locate_crash_frame(tr.flow, cfg.flow)) tr.flow_s = static_cast<double>(*crash) / fps;

    AnomalyEvent refined = ev;
    std::optional<double> t;
    Branch branch = ev.branch;
    if (tr.flow_s && tr.trajectory_s) {
      const bool flow_wins = std::abs(*tr.flow_s - *tr.trajectory_s) <= cfg.pipeline.arbitration_s ||
                             *tr.flow_s <= *tr.trajectory_s;
      t = flow_wins ? tr.flow_s : tr.trajectory_s;
      branch = flow_wins ? Branch::flow_refined : Branch::trajectory_refined;
    } else if (tr.flow_s) {
      t = tr.flow_s;
      branch = Branch::flow_refined;
    } else if (tr.trajectory_s) {
      t = tr.trajectory_s;
      branch = Branch::trajectory_refined;
    }
    // A crash instant after the vehicle has already stopped cannot be its cause.
    if (t && *t <= t_a) {
      refined.start_time = TimeStamp{*t};
      refined.branch = branch;
      refined.history.emplace_back(std::string(to_string(branch)), *t);
    }
    if (tr.trajectory.offtrack_count > 0) {
      refined.confidence = 1.0 - (1.0 - refined.confidence) *
                                     std::pow(cfg.pipeline.offtrack_confidence_factor,
                                              static_cast<double>(tr.trajectory.offtrack_count));
    }
    out.push_back(std::move(refined));
    if (traces) traces->push_back(std::move(tr));
  }
  return out;
}

PipelineResult run_pipeline(const FrameSource& frames, const DetectionSet& original, const DetectionSet* background,
                            const PipelineConfig& cfg) {
  cfg.validate();
  const VideoManifest& m = frames.manifest();
  PipelineResult res;

  // Stage 1: background stream, road mask and original-stream tracks.
  FirstPass fp;
  const std::filesystem::path cache = cfg.pipeline.cache_dir;
  const std::string key = cache.empty() ? std::string() : cache_key(m, original, background, cfg);
  if (!cache.empty() && std::filesystem::exists(cache / "cache_key.txt") && read_text(cache / "cache_key.txt") == key) {
    const ImageU8 mask = read_image(cache / "road_mask.pgm").pixels;
    fp.road = RoadMask(Mask((mask > 0).cast<std::uint8_t>()), ImageI(), ImageI());
    fp.original_tracks = load_tracks((cache / "tracks_original.txt").string());
    fp.background = load_detections(cache / "background_detections.txt", DetectionSource::background, m.frame_count);
    res.cache_hit = true;
  } else {
    fp = first_pass(frames, original, background, cfg);
    if (!cache.empty()) {
      std::filesystem::create_directories(cache);
      write_gray(cache / "road_mask.pgm", Mask(fp.road.mask() * 255));
      write_tracks((cache / "tracks_original.txt").string(), fp.original_tracks);
      write_detections(cache / "background_detections.txt", fp.background);
      std::ofstream(cache / "cache_key.txt") << key;
    }
  }
  res.road_mask = fp.road;
  res.original_tracks = std::move(fp.original_tracks);
  res.background_detections = std::move(fp.background);
  res.skipped_shake = fp.skipped_shake;
  res.skipped_area = fp.skipped_area;

  // Stage 2: box- and pixel-level tracking over the background stream.
  BoxTracker bg_tracker(tracker_params(cfg));
  PixelStateGrid grid(m.height, m.width);
  std::vector<AnomalyEvent> pixel_events;
  for (std::int64_t f : sample_frames(m, res.background_detections, cfg.background.sample_interval)) {
    const auto dets = res.background_detections.at(f);
    in_stage("box-tracker", f, [&] { bg_tracker.step(dets, f); });
    in_stage("pixel-tracker", f, [&] {
      pixel_update(grid, dets, f, cfg.pixel, m.fps);
      for (AnomalyEvent& e : extract_pixel_anomalies(grid, res.road_mask, dets, m.fps, m.video_id)) {
        pixel_events.push_back(std::move(e));
      }
    });
  }
  res.background_tracks = bg_tracker.tracks();
  res.coarse_pixel = collapse_duplicates(std::move(pixel_events), cfg.backtrack.fusion_iou, cfg.backtrack.max_deviation_s);
  res.coarse_box = classify_box_anomalies(res.background_tracks, res.road_mask, cfg.criteria, m.fps, m.video_id);

  // Stage 3: ROI backtracking on original frames, then branch fusion.
  std::vector<AnomalyEvent> pix_bt, box_bt;
  for (const AnomalyEvent& e : res.coarse_pixel) {
    pix_bt.push_back(in_stage("roi-backtracker", e.start_time.to_frame(m.fps),
                              [&] { return backtrack_start(e, frames, original, cfg.backtrack); }));
  }
  for (const AnomalyEvent& e : res.coarse_box) {
    box_bt.push_back(in_stage("roi-backtracker", e.start_time.to_frame(m.fps),
                              [&] { return backtrack_start(e, frames, original, cfg.backtrack); }));
  }
  res.static_events = fuse_branch_events(pix_bt, box_bt, cfg.backtrack);

  // Stage 4: bilateral tracing.
  if (cfg.pipeline.dynamic_stage) {
    res.events = refine_dynamic(res.static_events, frames, res.original_tracks, res.road_mask, cfg, &res.traces);
  } else {
    res.events = res.static_events;
  }
  for (AnomalyEvent& e : res.events) {
    e.start_time.seconds = std::clamp(e.start_time.seconds, 0.0, m.duration_seconds());
    e.confidence = std::clamp(e.confidence, 0.0, 1.0);
  }
  return res;
}

void write_event_details(const std::filesystem::path& path, std::span<const AnomalyEvent> events) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "# video_id\tstart_s\tx1\ty1\tx2\ty2\tbranch\tconfidence\thistory\n";
  for (const AnomalyEvent& e : events) {
    os << e.video_id << '\t' << format_seconds(e.start_time.seconds) << '\t' << format_double(e.bbox.x1) << '\t'
       << format_double(e.bbox.y1) << '\t' << format_double(e.bbox.x2) << '\t' << format_double(e.bbox.y2) << '\t'
       << to_string(e.branch) << '\t' << format_double(e.confidence) << '\t';
    for (std::size_t i = 0; i < e.history.size(); ++i) {
      os << (i ? ";" : "") << e.history[i].first << ':' << format_seconds(e.history[i].second);
    }
    os << '\n';
  }
}

void write_results(const std::filesystem::path& dir, const PipelineResult& result, const PipelineConfig& cfg) {
  std::filesystem::create_directories(dir);
  const auto preds = to_predictions(result.events);
  write_predictions(dir / "results.txt", preds);
  write_event_details(dir / "events.txt", result.events);
  write_gray(dir / "road_mask.pgm", Mask(result.road_mask.mask() * 255));
  if (!cfg.pipeline.dump_series) return;
  for (std::size_t i = 0; i < result.traces.size(); ++i) {
    const DynamicTrace& tr = result.traces[i];
    std::ofstream ns(dir / ("nseries_" + std::to_string(i) + ".tsv"));
    ns << "interval\tstart_s\tabnormal_curves\n";
    for (std::size_t k = 0; k < tr.trajectory.n_series.size(); ++k) {
      ns << k << '\t' << format_double(tr.trajectory.window_start_s + static_cast<double>(k) * cfg.trajectory.interval_s)
         << '\t' << tr.trajectory.n_series[k] << '\n';
    }
    write_velocity_series(dir / ("velocity_" + std::to_string(i) + ".tsv"), tr.flow);
  }
}

}  // namespace stalltrace
