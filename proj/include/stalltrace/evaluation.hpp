#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stalltrace/ingest.hpp"

namespace stalltrace {

struct Prediction {
  std::string video_id;
  double start_seconds = 0.0;
  double confidence = 0.0;
};

struct MatchedPair {
  std::string video_id;
  double predicted = 0.0;
  double truth = 0.0;
  [[nodiscard]] double error() const { return predicted - truth; }
};

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<MatchedPair> pairs;
};

/// Greedy per-video matching by smallest absolute time error; ties go to the earlier prediction.
MatchResult match_events(std::span<const Prediction> predictions, std::span<const GroundTruth> truth,
                         double match_window_s = 10.0);

double f1(const MatchResult& m);
/// Unclamped RMSE over matched pairs; 0 when nothing matched.
double rmse(const MatchResult& m);
double nrmse_from_rmse(double rmse_s, double norm_s = 300.0);
/// Normalised RMSE; 1 when nothing matched.
double nrmse(const MatchResult& m, double norm_s = 300.0);
double s4(double f1_value, double nrmse_value);

struct Scores {
  double f1 = 0.0;
  double rmse = 0.0;
  double nrmse = 1.0;
  double s4 = 0.0;
};

Scores score(const MatchResult& m, double norm_s = 300.0);

std::vector<Prediction> load_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);
std::vector<Prediction> to_predictions(std::span<const AnomalyEvent> events);

/// Per-video table followed by the aggregate scores.
void write_report(std::ostream& os, std::span<const Prediction> predictions, std::span<const GroundTruth> truth,
                  double match_window_s = 10.0, double norm_s = 300.0);

}  // namespace stalltrace
