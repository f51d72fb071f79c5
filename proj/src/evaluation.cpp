#include "stalltrace/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <tuple>

namespace stalltrace {

MatchResult match_events(std::span<const Prediction> predictions, std::span<const GroundTruth> truth,
                         double match_window_s) {
  struct Candidate {
    double err;
    double pred_time;
    std::size_t p, t;
  };
  std::vector<Candidate> cands;
  for (std::size_t p = 0; p < predictions.size(); ++p) {
    for (std::size_t t = 0; t < truth.size(); ++t) {
      if (predictions[p].video_id != truth[t].video_id) continue;
      const double err = std::abs(predictions[p].start_seconds - truth[t].start_seconds);
      if (err <= match_window_s) cands.push_back({err, predictions[p].start_seconds, p, t});
    }
  }
  // Sorting on values, not input positions, keeps the result independent of prediction order.
  std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.err != b.err) return a.err < b.err;
    if (a.pred_time != b.pred_time) return a.pred_time < b.pred_time;
    return truth[a.t].start_seconds < truth[b.t].start_seconds;
  });
  std::vector<char> p_used(predictions.size(), 0), t_used(truth.size(), 0);
  MatchResult r;
  for (const Candidate& c : cands) {
    if (p_used[c.p] || t_used[c.t]) continue;
    p_used[c.p] = t_used[c.t] = 1;
    r.pairs.push_back({truth[c.t].video_id, predictions[c.p].start_seconds, truth[c.t].start_seconds});
  }
  std::sort(r.pairs.begin(), r.pairs.end(), [](const MatchedPair& a, const MatchedPair& b) {
    return std::tie(a.video_id, a.truth, a.predicted) < std::tie(b.video_id, b.truth, b.predicted);
  });
  r.tp = static_cast<int>(r.pairs.size());
  r.fp = static_cast<int>(predictions.size()) - r.tp;
  r.fn = static_cast<int>(truth.size()) - r.tp;
  return r;
}

double f1(const MatchResult& m) {
  if (m.tp + m.fp + m.fn < 1) throw Error("f1: empty evaluation set");
  if (m.tp == 0) return 0.0;
  const double p = static_cast<double>(m.tp) / (m.tp + m.fp);
  const double r = static_cast<double>(m.tp) / (m.tp + m.fn);
  return 2.0 * p * r / (p + r);
}

double rmse(const MatchResult& m) {
  if (m.pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const MatchedPair& p : m.pairs) sum += p.error() * p.error();
  return std::sqrt(sum / static_cast<double>(m.pairs.size()));
}

double nrmse_from_rmse(double rmse_s, double norm_s) { return std::min(rmse_s, norm_s) / norm_s; }

double nrmse(const MatchResult& m, double norm_s) {
  if (m.tp == 0) return 1.0;
  return nrmse_from_rmse(rmse(m), norm_s);
}

double s4(double f1_value, double nrmse_value) { return f1_value * (1.0 - nrmse_value); }

Scores score(const MatchResult& m, double norm_s) {
  Scores s;
  s.f1 = f1(m);
  s.rmse = rmse(m);
  s.nrmse = nrmse(m, norm_s);
  s.s4 = s4(s.f1, s.nrmse);
  return s;
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open predictions " + path.string());
  std::vector<Prediction> out;
  std::string line;
  for (int ln = 1; std::getline(is, line); ++ln) {
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto f = split_ws(body);
    if (f.size() != 2 && f.size() != 3) {
      throw LoadError(path.string() + ":" + std::to_string(ln) + ": expected `video_id start_s [confidence]`");
    }
    try {
      out.push_back({std::string(f[0]), parse_double(f[1]), f.size() == 3 ? parse_double(f[2]) : 1.0});
    } catch (const Error& e) {
      throw LoadError(path.string() + ":" + std::to_string(ln) + ": " + e.what());
    }
  }
  return out;
}

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  for (const Prediction& p : predictions) {
    os << p.video_id << ' ' << format_seconds(p.start_seconds) << ' ' << format_double(p.confidence) << '\n';
  }
}

std::vector<Prediction> to_predictions(std::span<const AnomalyEvent> events) {
  std::vector<Prediction> out;
  out.reserve(events.size());
  for (const AnomalyEvent& e : events) out.push_back({e.video_id, e.start_time.seconds, e.confidence});
  return out;
}

void write_report(std::ostream& os, std::span<const Prediction> predictions, std::span<const GroundTruth> truth,
                  double match_window_s, double norm_s) {
  std::set<std::string> videos;
  for (const Prediction& p : predictions) videos.insert(p.video_id);
  for (const GroundTruth& g : truth) videos.insert(g.video_id);

  os << "video\tpredicted\ttruth\ttp\tfp\tfn\trmse\n";
  for (const std::string& vid : videos) {
    std::vector<Prediction> vp;
    std::vector<GroundTruth> vt;
    std::copy_if(predictions.begin(), predictions.end(), std::back_inserter(vp),
                 [&](const Prediction& p) { return p.video_id == vid; });
    std::copy_if(truth.begin(), truth.end(), std::back_inserter(vt),
                 [&](const GroundTruth& g) { return g.video_id == vid; });
    const MatchResult m = match_events(vp, vt, match_window_s);
    os << vid << '\t' << vp.size() << '\t' << vt.size() << '\t' << m.tp << '\t' << m.fp << '\t' << m.fn << '\t'
       << format_fixed(rmse(m), 3) << '\n';
  }
  const MatchResult all = match_events(predictions, truth, match_window_s);
  if (all.tp + all.fp + all.fn == 0) {
    os << "no events and no ground truth\n";
    return;
  }
  const Scores s = score(all, norm_s);
  os << "\nTP " << all.tp << "  FP " << all.fp << "  FN " << all.fn << '\n';
  os << "F1 " << format_fixed(s.f1, 4) << "  RMSE " << format_fixed(s.rmse, 4) << "  NRMSE "
     << format_fixed(s.nrmse, 6) << "  S4 " << format_fixed(s.s4, 4) << '\n';
}

}  // namespace stalltrace
