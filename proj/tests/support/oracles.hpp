#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library's numerical code paths.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "percmap/camera.hpp"
#include "percmap/eval.hpp"
#include "percmap/losses.hpp"
#include "percmap/map_core.hpp"
#include "percmap/ops.hpp"
#include "percmap/rng.hpp"
#include "percmap/tensor.hpp"

namespace oracle {

using percmap::Point2;
using percmap::Shape;
using percmap::Tensor;

Tensor random_tensor(percmap::Xoshiro256& rng, const Shape& shape, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = false);
double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b);

// ---- naive loop forward ops ----
std::vector<double> conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);
std::vector<double> matmul(const Tensor& a, const Tensor& b);  // rank 2 or batched rank 3
std::vector<double> linear(const Tensor& x, const Tensor& w, const Tensor& b);
std::vector<double> sigmoid(const Tensor& x);
std::vector<double> softplus(const Tensor& x);
std::vector<double> concat(const Tensor& a, const Tensor& b, std::size_t axis);
std::vector<double> upsample_nearest(const Tensor& x, std::size_t f);
std::vector<double> mean_pool_spatial(const Tensor& x);
std::vector<double> mean_axis(const Tensor& x, std::size_t axis);
std::vector<double> softmax_rows(const Tensor& x);
std::vector<double> transpose_last2(const Tensor& x);
std::vector<double> repeat_rows(const Tensor& x, std::size_t k);
std::vector<double> broadcast_rows(const Tensor& v, std::size_t rows);
std::vector<double> column_affine(const Tensor& x, const std::vector<double>& s, const std::vector<double>& o);
std::vector<double> scatter_max(const Tensor& src, std::size_t out_rows,
                                const std::vector<percmap::ops::ScatterEntry>& entries);

// ---- finite differences ----
struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// Compares leaf gradients from backward(f()) with central differences of f.
// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheck check_gradients(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                          const std::vector<std::string>& names = {}, double h = 1e-6, double floor = 1e-3,
                          std::size_t max_per_leaf = 0);

// ---- geometry ----
// Walks the chain in `substeps` equal arclength increments and records the
// point at each target arclength.
std::vector<Point2> resample_walk(const std::vector<Point2>& pts, bool closed, std::size_t n,
                                  std::size_t substeps = 100000);
double chamfer_loop(const std::vector<Point2>& a, const std::vector<Point2>& b);

// ---- raster ----
// Per-cell brute force: center within w/2 of any segment, or inside the
// polygon by winding number.
std::vector<std::size_t> raster_cells(const std::vector<Point2>& pts, bool closed, const percmap::BevGrid& grid,
                                      double line_width, bool fill);

// ---- heatmap ----
std::vector<double> heatmap(const percmap::VectorMap& map, const percmap::CameraRig& rig, double sigma);

// ---- matching ----
struct BruteMatch {
  double total_cost = 0.0;
  std::vector<int> gt_for_pred;
};
BruteMatch brute_matching(const Tensor& v_hat, const Tensor& c_hat, const percmap::VectorMap& gt,
                          const percmap::MatchingParams& prm);

// ---- evaluator ----
// AP per category and threshold by exhaustive enumeration of matchings.
// Greedy: the unique enumerated matching consistent with the rank-ordered
// nearest-unmatched rule. Hungarian: max #TP, then min summed CD.
// Returns one AP per threshold, or -1 when the greedy rule does not single out
// exactly one enumerated matching.
std::vector<double> brute_ap(const std::vector<percmap::FramePair>& frames, const percmap::Category& cat,
                             const std::vector<double>& thresholds, std::size_t n_eval, percmap::MatchMode mode);

percmap::VectorMap random_map(percmap::Xoshiro256& rng, std::size_t max_per_cat, bool with_conf,
                              double extent = 10.0);

}  // namespace oracle
