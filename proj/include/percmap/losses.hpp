#pragma once

#include <vector>

#include "percmap/map_core.hpp"
#include "percmap/targets.hpp"
#include "percmap/tensor.hpp"

namespace percmap {

// Penalty-reduced pixelwise focal loss on sigmoid(logits) (CornerNet form):
//   target == 1 : -(1-p)^alpha log p
//   otherwise   : -(1-t)^beta p^alpha log(1-p)
// summed and divided by max(1, #positives). With binarize_target the soft
// target is replaced by (t == 1).
struct HeatmapFocalParams {
  double alpha = 2.0;
  double beta = 4.0;
  bool binarize_target = false;
};

Tensor heatmap_loss(const Tensor& logits, const HeatmapTarget& target,
                    const HeatmapFocalParams& params = {});

// Pixelwise binary cross-entropy between the rasterized predictions and a
// binary ground-truth mask, averaged over H * W * N_c. Each prediction is
// drawn into the channel of its argmax class with value sigmoid(logit) of
// that class; overlaps keep the max. Coordinates are detached: gradients
// reach c_hat only. Log arguments are clamped below at `log_eps`.
struct RisParams {
  RasterOptions raster;
  double log_eps = 1e-6;
};

Tensor ris_loss(const Tensor& v_hat, const Tensor& c_hat, const RasterMask& gt_mask,
                const BevGrid& grid, const RisParams& params = {});

// Prediction instances decoded from raw head outputs: argmax class,
// confidence sigmoid(logit), category closure from the class.
VectorMap predictions_to_map(const Tensor& v_hat, const Tensor& c_hat, const std::string& frame_id = {});

struct MatchingParams {
  double cls_cost_weight = 2.0;
  double pts_cost_weight = 5.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

// GT point orderings considered equivalent: open chains forward and
// reversed; closed chains every rotation in both directions.
std::vector<std::vector<Point2>> equivalent_orderings(const MapInstance& gt);

// Mean over points of |dx| + |dy|, in meters.
double point_l1(const std::vector<Point2>& a, const std::vector<Point2>& b);

// Sigmoid focal matching cost of predicting class `cls` from logits.
double focal_class_cost(std::span<const double> logits, int cls, const MatchingParams& params);

struct Assignment {
  std::vector<int> gt_for_pred;  // -1 when unmatched
  std::vector<int> pred_for_gt;
  std::vector<int> ordering_for_gt;  // index into equivalent_orderings(gt)
  double total_cost = 0.0;
};

// Pairwise cost matrix [num_pred x num_gt] and the best ordering for each pair.
struct MatchingCost {
  std::vector<double> cost;
  std::vector<int> best_ordering;
  std::size_t num_pred = 0;
  std::size_t num_gt = 0;
};

MatchingCost matching_cost(const Tensor& v_hat, const Tensor& c_hat, const VectorMap& gt,
                           const MatchingParams& params);

struct MatchingLosses {
  Tensor cls;
  Tensor pts;
  Assignment assignment;
};

// Hungarian assignment on matching_cost, then
//   cls: sigmoid focal loss over all predictions x classes (unmatched rows
//        are background), divided by max(1, #GT)
//   pts: mean over matched pairs of point_l1 under the best ordering.
// `gt` instances must already carry v_hat.dim(1) points.
MatchingLosses matching_losses(const Tensor& v_hat, const Tensor& c_hat, const VectorMap& gt,
                               const MatchingParams& params = {});

struct LossWeights {
  double heatmap = 0.1;
  double ris = 15.0;
};

// Undefined components are absent (weight zero).
struct LossComponents {
  Tensor heatmap;
  Tensor ris;
  Tensor cls;
  Tensor pts;
};

Tensor total_loss(const LossComponents& parts, const LossWeights& weights = {});

}  // namespace percmap
