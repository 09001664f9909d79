#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "percmap/map_core.hpp"

namespace percmap {

enum class MatchMode {
  kGreedy,     // by descending confidence, nearest unmatched GT
  kHungarian,  // max #TP then min total Chamfer distance, per threshold
};

struct EvalConfig {
  std::vector<double> thresholds_coarse{0.5, 1.0, 1.5};
  std::vector<double> thresholds_tight{0.2, 0.5, 1.0};
  std::size_t n_eval_points = 100;
  std::vector<Category> categories{Category::ped(), Category::div(), Category::bdr()};
  MatchMode mode = MatchMode::kGreedy;
};

void validate_eval_config(const EvalConfig& cfg);
nlohmann::json to_json(const EvalConfig& cfg);
EvalConfig eval_config_from_json(const nlohmann::json& j);

// Symmetric Chamfer distance between the two chains after resampling both to
// n points: 0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|).
double chamfer_distance(const MapInstance& a, const MapInstance& b, std::size_t n);
// Same, on already resampled point sets.
double chamfer_distance_points(const std::vector<Point2>& a, const std::vector<Point2>& b);

// All-point interpolated AP over a ranked TP/FP list:
//   (1/num_gt) * sum over TP ranks k of max_{j >= k} precision(j).
double average_precision(std::span<const char> tp_ranked, std::size_t num_gt);

struct ThresholdResult {
  double threshold = 0.0;
  double ap = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
};

struct CategoryResult {
  Category category;
  std::size_t num_gt = 0;
  std::size_t num_pred = 0;
  bool excluded = false;  // no GT and no predictions anywhere
  std::vector<ThresholdResult> coarse;
  std::vector<ThresholdResult> tight;
  double ap_coarse = 0.0;  // mean over coarse thresholds
  double ap_tight = 0.0;
};

struct EvalReport {
  EvalConfig config;
  std::size_t num_frames = 0;
  std::vector<CategoryResult> categories;
  double map = 0.0;
  double map_tight = 0.0;
  std::vector<std::string> diagnostics;
};

struct FramePair {
  VectorMap pred;
  VectorMap gt;
};

// Matching is per frame; the PR curve for each category and threshold ranks
// all predictions of the frame set by confidence (ties: frame, then instance
// index).
EvalReport evaluate(std::span<const FramePair> frames, const EvalConfig& cfg);
EvalReport evaluate(const VectorMap& preds, const VectorMap& gts, const EvalConfig& cfg);

nlohmann::json to_json(const EvalReport& report);
std::string to_csv(const EvalReport& report);

}  // namespace percmap
