// Acceptance run: one PASS/FAIL line per criterion, detail lines indented beneath it.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <unistd.h>

#include "invariants.hpp"
#include "oracles.hpp"
#include "stalltrace/config.hpp"
#include "stalltrace/evaluation.hpp"
#include "stalltrace/flow_tracer.hpp"
#include "stalltrace/optical_flow.hpp"
#include "stalltrace/pipeline.hpp"
#include "stalltrace/scenario.hpp"
#include "stalltrace/similarity.hpp"

namespace st = stalltrace;

namespace {

// Tolerances.
constexpr double kNrmseTol = 1e-6;
constexpr double kS4Tol = 5e-5;
constexpr double kScoreBudgetMs = 1.0;
constexpr double kStartErrorS = 2.0;
constexpr double kMinAppearanceDelayS = 3.0;
constexpr double kScenarioBudgetS = 300.0;
constexpr double kKernelTol = 1e-6;
constexpr double kFlowTolPx = 0.2;
constexpr int kKnnSets = 100;
constexpr int kInvariantCases = 1000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Report {
  int failed = 0;
  void line(int id, bool pass, const std::string& text) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << id << ' ' << text << std::endl;
    if (!pass) ++failed;
  }
  static void detail(const std::string& text) { std::cout << "       " << text << std::endl; }
};

struct Outcome {
  st::PipelineResult result;
  double seconds = 0.0;
};

Outcome run(const st::Scenario& s, const st::PipelineConfig& cfg) {
  const auto t0 = Clock::now();
  const st::SyntheticFrameSource frames(s);
  const st::DetectionSet original = st::original_detections(s);
  Outcome o;
  o.result = st::run_pipeline(frames, original, nullptr, cfg);
  o.seconds = seconds_since(t0);
  return o;
}

std::optional<double> earliest_coarse(const st::AnomalyEvent& e) {
  std::optional<double> best;
  for (const auto& [stage, t] : e.history) {
    if (stage == "pixel-coarse" || stage == "box-coarse") best = best ? std::min(*best, t) : t;
  }
  return best;
}

// Every event carries its provenance and lies inside the video.
bool well_formed(const st::PipelineResult& r, const st::Scenario& s) {
  const double duration = static_cast<double>(s.frame_count) / s.fps;
  return std::all_of(r.events.begin(), r.events.end(), [&](const st::AnomalyEvent& e) {
    return !e.history.empty() && e.start_time.seconds >= 0.0 && e.start_time.seconds <= duration;
  });
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("stalltrace_accept_" + std::to_string(::getpid())) / name;
  std::filesystem::remove_all(p);
  return p;
}

void table_arithmetic(Report& rep) {
  const double f1 = 0.9302, rmse = 3.4039;
  const auto t0 = Clock::now();
  const double nrmse = st::nrmse_from_rmse(rmse);
  const double s4 = st::s4(f1, nrmse);
  const double ms = 1e3 * seconds_since(t0);
  const bool ok = std::abs(nrmse - 0.011346) <= kNrmseTol && std::abs(s4 - 0.9196) <= kS4Tol && ms < kScoreBudgetMs;
  rep.line(1, ok, "score arithmetic: NRMSE " + fmt("%.7f", nrmse) + " S4 " + fmt("%.5f", s4) + " in " +
                      fmt("%.4f", ms) + " ms (expected 0.011346, 0.9196, < 1 ms)");
}

void headline(Report&) {
  std::cout << "[N/A ] 2 headline F1/RMSE on the real traffic-camera set: not reproducible here (footage and "
               "trained detector unavailable); replaced by criteria 3-6"
            << std::endl;
}

void stall_suite(Report& rep) {
  const st::PipelineConfig cfg;
  const int n = st::preset_variants("stall");
  int detected = 0, false_pos = 0, malformed = 0;
  double worst_err = 0, min_delay = 1e9, worst_time = 0;
  for (int v = 0; v < n; ++v) {
    const st::Scenario s = st::make_preset("stall", v);
    const Outcome o = run(s, cfg);
    const double truth = s.truth_seconds.at(0);
    const auto& ev = o.result.events;
    std::ostringstream d;
    d << s.video_id << ": truth " << fmt("%.2f", truth) << " s, " << ev.size() << " event(s)";
    bool matched = false;
    for (const st::AnomalyEvent& e : ev) {
      const double err = std::abs(e.start_time.seconds - truth);
      if (!matched && err <= kStartErrorS) {
        matched = true;
        worst_err = std::max(worst_err, err);
        const double delay = earliest_coarse(e).value_or(e.start_time.seconds) - truth;
        min_delay = std::min(min_delay, delay);
        d << ", predicted " << fmt("%.2f", e.start_time.seconds) << " (" << st::to_string(e.branch)
          << "), coarse delay " << fmt("%.2f", delay) << " s";
      } else {
        ++false_pos;
        d << ", unmatched at " << fmt("%.2f", e.start_time.seconds);
      }
    }
    detected += matched;
    malformed += !well_formed(o.result, s);
    worst_time = std::max(worst_time, o.seconds);
    d << ", " << fmt("%.1f", o.seconds) << " s runtime";
    Report::detail(d.str());
  }
  const bool ok = detected == n && false_pos == 0 && malformed == 0 && worst_err <= kStartErrorS &&
                  min_delay >= kMinAppearanceDelayS && worst_time <= kScenarioBudgetS;
  rep.line(3, ok, "stall suite: " + std::to_string(detected) + "/" + std::to_string(n) + " detected, " +
                      std::to_string(false_pos) + " false positives, max error " + fmt("%.2f", worst_err) +
                      " s, min appearance delay " + fmt("%.2f", min_delay) + " s, max runtime " +
                      fmt("%.1f", worst_time) + " s");
}

void crash_suite(Report& rep) {
  const int n = st::preset_variants("crash");
  int within = 0, improved = 0, dynamic_branch = 0, malformed = 0;
  double worst_err = 0;
  for (int v = 0; v < n; ++v) {
    const st::Scenario s = st::make_preset("crash", v);
    st::PipelineConfig cfg;
    cfg.pipeline.cache_dir = scratch_dir(s.video_id);
    const Outcome full = run(s, cfg);
    cfg.pipeline.dynamic_stage = false;
    const Outcome ablated = run(s, cfg);
    std::filesystem::remove_all(cfg.pipeline.cache_dir);
    const double truth = s.truth_seconds.at(0);
    auto best_error = [&](const std::vector<st::AnomalyEvent>& ev, const st::AnomalyEvent** which) {
      double err = 1e9;
      for (const st::AnomalyEvent& e : ev) {
        if (std::abs(e.start_time.seconds - truth) < err) {
          err = std::abs(e.start_time.seconds - truth);
          if (which) *which = &e;
        }
      }
      return err;
    };
    const st::AnomalyEvent* hit = nullptr;
    const double err = best_error(full.result.events, &hit);
    const double err_ablated = best_error(ablated.result.events, nullptr);
    const bool one = full.result.events.size() == 1;
    malformed += !well_formed(full.result, s) || !well_formed(ablated.result, s);
    within += one && err <= kStartErrorS;
    improved += err_ablated > err;
    const bool dyn = hit && (hit->branch == st::Branch::flow_refined || hit->branch == st::Branch::trajectory_refined);
    dynamic_branch += dyn;
    worst_err = std::max(worst_err, err);
    Report::detail(s.video_id + ": swerve " + fmt("%.2f", truth) + " s, " + std::to_string(full.result.events.size()) +
                   " event(s), error " + fmt("%.2f", err) + " s" +
                   (hit ? std::string(" (") + std::string(st::to_string(hit->branch)) + ")" : std::string()) +
                   ", ablation error " + fmt("%.2f", err_ablated) + " s, " + fmt("%.1f", full.seconds) + " s runtime");
  }
  const bool ok = within == n && improved == n && dynamic_branch == n && malformed == 0;
  rep.line(4, ok, "crash suite: " + std::to_string(within) + "/" + std::to_string(n) + " within " +
                      fmt("%.0f", kStartErrorS) + " s via the dynamic stage (" + std::to_string(dynamic_branch) +
                      " refined), ablation worse in " + std::to_string(improved) + "/" + std::to_string(n) +
                      ", max error " + fmt("%.2f", worst_err) + " s");
}

void parking(Report& rep) {
  const st::Scenario s = st::make_preset("parking");
  const Outcome o = run(s, st::PipelineConfig{});
  const auto& ev = o.result.events;
  for (const st::AnomalyEvent& e : ev) Report::detail("event at " + fmt("%.2f", e.start_time.seconds) + " s");
  const bool ok = ev.empty() && o.result.coarse_pixel.empty() && o.result.coarse_box.empty();
  rep.line(5, ok, "parked off-road vehicle: " + std::to_string(ev.size()) + " event(s), " +
                      std::to_string(o.result.coarse_pixel.size() + o.result.coarse_box.size()) +
                      " coarse candidate(s) on the road mask");
}

void curved(Report& rep) {
  const st::Scenario s = st::make_preset("curved");
  const Outcome o = run(s, st::PipelineConfig{});
  bool ok = !o.result.traces.empty();
  for (const st::DynamicTrace& t : o.result.traces) {
    const auto& n = t.trajectory.n_series;
    const long elevated = std::count_if(n.begin(), n.end(), [](int v) { return v > 0; });
    std::ostringstream d;
    d << "N series:";
    for (int v : n) d << ' ' << v;
    Report::detail(d.str());
    // A platform: abnormal curves throughout the window, no peak singled out.
    const bool platform = !t.trajectory.crash_interval && 2 * elevated >= static_cast<long>(n.size());
    ok = ok && platform && !t.trajectory_s;
  }
  for (const st::AnomalyEvent& e : o.result.events) ok = ok && e.branch != st::Branch::trajectory_refined;
  rep.line(6, ok, "curved road: " + std::to_string(o.result.traces.size()) +
                      " trace(s), N series a platform with no trajectory refinement");
}

void kernels(Report& rep) {
  double worst = 0;
  const double c1 = std::pow(0.01 * 255, 2);
  for (int a = 0; a <= 255; a += 15) {
    for (int b = 0; b <= 255; b += 15) {
      const st::ImageU8 pa = st::ImageU8::Constant(16, 16, static_cast<std::uint8_t>(a));
      const st::ImageU8 pb = st::ImageU8::Constant(16, 16, static_cast<std::uint8_t>(b));
      const double diff = std::abs(a - b);
      const double psnr = a == b ? st::kPsnrCap : std::min(st::kPsnrCap, 10 * std::log10(255.0 * 255.0 / (diff * diff)));
      const double ssim = (2.0 * a * b + c1) / (double(a) * a + double(b) * b + c1);
      const double euclid = 1.0 - diff / 255.0;
      worst = std::max({worst, std::abs(st::psnr(pa, pb) - psnr), std::abs(st::ssim(pa, pb) - ssim),
                        std::abs(st::euclid_similarity(pa, pb) - euclid)});
    }
  }
  double flow_err = 0;
  int tracked = 0, seeded = 0;
  const st::ImageU8 tex = fixtures::texture(120, 160, 3);
  const auto seeds = st::seed_points({40, 30, 120, 90}, tex, {});
  for (const auto& [dx, dy] : std::vector<std::pair<int, int>>{{1, 0}, {2, 0}, {0, -2}, {-3, 4}, {3, 3}, {-1, -1}}) {
    const auto out = st::lk_step(tex, oracles::shifted(tex, dx, dy), seeds, {});
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      ++seeded;
      if (!out[i].tracked) continue;
      ++tracked;
      flow_err = std::max(flow_err, (out[i].pos - seeds[i].pos - Eigen::Vector2d(dx, dy)).norm());
    }
  }
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(-12, 12);
  int knn_same = 0;
  for (int trial = 0; trial < kKnnSets; ++trial) {
    const int n = 7 + trial % 60;
    Eigen::MatrixX2d p(n, 2);
    for (int i = 0; i < n; ++i) p.row(i) << u(rng), u(rng);
    knn_same += st::knn_outlier_filter(p, 6, 6.6).inlier == oracles::brute_knn(p, 6, 6.6);
  }
  const bool ok = worst <= kKernelTol && tracked == seeded && seeded > 0 && flow_err <= kFlowTolPx &&
                  knn_same == kKnnSets;
  rep.line(7, ok, "kernels: max PSNR/SSIM/Euclid deviation " + fmt("%.2e", worst) + ", LK " + std::to_string(tracked) +
                      "/" + std::to_string(seeded) + " tracked with max error " + fmt("%.3f", flow_err) +
                      " px, KNN agrees on " + std::to_string(knn_same) + "/" + std::to_string(kKnnSets) + " sets");
}

void invariant_suites(Report& rep) {
  struct Suite {
    std::string name;
    std::function<invariants::Failure(std::mt19937&, int)> check;
  };
  const std::vector<Suite> suites{
      {"GMM normalisation", invariants::gmm_case},
      {"backtrack bounds", invariants::backtrack_case},
      {"vote monotonicity", [](std::mt19937& r, int) { return invariants::vote_case(r); }},
      {"tracker determinism", invariants::tracker_case},
  };
  bool ok = true;
  std::string summary;
  for (const Suite& s : suites) {
    std::mt19937 rng(std::hash<std::string>{}(s.name));
    int passed = 0;
    for (int c = 0; c < kInvariantCases; ++c) {
      const auto fail = s.check(rng, c);
      if (!fail) {
        ++passed;
      } else if (passed == c) {  // first failure only
        Report::detail(s.name + " case " + std::to_string(c) + ": " + *fail);
      }
    }
    ok = ok && passed == kInvariantCases;
    summary += (summary.empty() ? "" : ", ") + s.name + " " + std::to_string(passed) + "/" +
               std::to_string(kInvariantCases);
  }
  rep.line(8, ok, "invariants: " + summary);
}

void defaults(Report& rep) {
  const std::vector<std::pair<std::string, std::string>> expected{
      {"roadmask.area_filter", "6000"},
      {"pixel.min_abnormal_duration_s", "60"},
      {"pixel.suspicious_duration_s", "40"},
      {"criteria.min_duration_s", "40"},
      {"criteria.window_s", "10"},
      {"criteria.window_count", "5"},
      {"criteria.min_windows_present", "4"},
      {"criteria.iou_retrieve_thresh", "0.3"},
      {"criteria.center_std_max", "3"},
      {"backtrack.roi_iou_thresh", "0.9"},
      {"backtrack.max_deviation_s", "12"},
      {"backtrack.psnr_stop", "13"},
      {"backtrack.ssim_stop", "0.4"},
      {"backtrack.euclid_stop", "0.7"},
      {"backtrack.psnr_avg", "10"},
      {"backtrack.ssim_avg", "0.3"},
      {"backtrack.euclid_avg", "0.65"},
      {"backtrack.max_backtrack_s", "15"},
      {"trajectory.min_traj_points", "10"},
      {"trajectory.fit_error_thresh", "30"},
      {"trajectory.offtrack_area_thresh", "40"},
      {"trajectory.offtrack_error_thresh", "10"},
      {"trajectory.offtrack_min_freq", "8"},
      {"flow.knn_k", "6"},
      {"flow.density_thresh", "6.6"},
      {"flow.scale", "2.5"},
  };
  const st::PipelineConfig cfg;
  int same = 0;
  for (const auto& [key, value] : expected) {
    std::string got;
    try {
      got = st::config_value(cfg, key);
    } catch (const st::Error& e) {
      got = std::string("<") + e.what() + ">";
    }
    if (got == value) {
      ++same;
    } else {
      Report::detail(key + " = " + got + ", expected " + value);
    }
  }
  rep.line(9, same == static_cast<int>(expected.size()),
           "shipped defaults: " + std::to_string(same) + "/" + std::to_string(expected.size()) + " match");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("stalltrace acceptance run");
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> pick(only.begin(), only.end());
  auto want = [&](int id) { return pick.empty() || pick.count(id); };

  Report rep;
  const std::vector<std::pair<int, std::function<void(Report&)>>> criteria{
      {1, table_arithmetic}, {2, headline}, {3, stall_suite}, {4, crash_suite}, {5, parking},
      {6, curved},           {7, kernels},  {8, invariant_suites}, {9, defaults},
  };
  for (const auto& [id, fn] : criteria) {
    if (!want(id)) continue;
    try {
      fn(rep);
    } catch (const std::exception& e) {
      rep.line(id, false, std::string("aborted: ") + e.what());
    }
  }
  std::filesystem::remove_all(std::filesystem::temp_directory_path() /
                              ("stalltrace_accept_" + std::to_string(::getpid())));
  return rep.failed == 0 ? 0 : 1;
}
