#include "percmap/losses.hpp"

#include <algorithm>
#include <cmath>

#include "percmap/errors.hpp"
#include "percmap/hungarian.hpp"

namespace percmap {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// log sigmoid(x) and log(1 - sigmoid(x)).
double log_p(double x) { return -softplus(-x); }
double log_1mp(double x) { return -softplus(x); }

std::size_t argmax_class(std::span<const double> logits) {
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

void require_heads(const Tensor& v_hat, const Tensor& c_hat) {
  PERCMAP_REQUIRE(v_hat.defined() && v_hat.rank() == 3 && v_hat.dim(2) == 2,
                  "v_hat must be [N_m, N_p, 2]");
  PERCMAP_REQUIRE(c_hat.defined() && c_hat.rank() == 2 && c_hat.dim(0) == v_hat.dim(0),
                  "c_hat must be [N_m, N_c]");
  PERCMAP_REQUIRE(c_hat.dim(1) == static_cast<std::size_t>(kNumCategories),
                  "c_hat must have one column per category");
}

std::vector<Point2> pred_points(const Tensor& v_hat, std::size_t i) {
  const std::size_t np = v_hat.dim(1);
  std::vector<Point2> pts(np);
  for (std::size_t k = 0; k < np; ++k) pts[k] = {v_hat[(i * np + k) * 2], v_hat[(i * np + k) * 2 + 1]};
  return pts;
}

}  // namespace

Tensor heatmap_loss(const Tensor& logits, const HeatmapTarget& target, const HeatmapFocalParams& prm) {
  PERCMAP_REQUIRE(logits.defined() && target.heatmap.defined() &&
                      logits.shape() == target.heatmap.shape(),
                  "heatmap_loss: logits and target shapes differ");
  const auto t = target.heatmap.data();
  std::size_t num_pos = 0;
  for (double v : t) num_pos += (v == 1.0);
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(num_pos, 1));

  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double x = logits[i];
    const double p = sigmoid(x);
    if (t[i] == 1.0) {
      total += -std::pow(1.0 - p, prm.alpha) * log_p(x);
    } else {
      const double tv = prm.binarize_target ? 0.0 : t[i];
      total += -std::pow(1.0 - tv, prm.beta) * std::pow(p, prm.alpha) * log_1mp(x);
    }
  }
  Tensor tgt = target.heatmap;
  return make_op_result(
      "heatmap_loss", {}, {total * norm}, {logits},
      [logits, tgt, prm, norm](std::span<const double> g, std::span<std::vector<double>* const> gin) {
        const auto t = tgt.data();
        for (std::size_t i = 0; i < t.size(); ++i) {
          const double x = logits[i];
          const double p = sigmoid(x);
          double d;
          if (t[i] == 1.0) {
            d = std::pow(1.0 - p, prm.alpha) * (prm.alpha * p * log_p(x) - (1.0 - p));
          } else {
            const double tv = prm.binarize_target ? 0.0 : t[i];
            d = std::pow(1.0 - tv, prm.beta) * std::pow(p, prm.alpha) *
                (p - prm.alpha * (1.0 - p) * log_1mp(x));
          }
          (*gin[0])[i] += g[0] * norm * d;
        }
      });
}

VectorMap predictions_to_map(const Tensor& v_hat, const Tensor& c_hat, const std::string& frame_id) {
  require_heads(v_hat, c_hat);
  VectorMap map;
  map.frame_id = frame_id;
  const std::size_t nc = c_hat.dim(1);
  for (std::size_t i = 0; i < v_hat.dim(0); ++i) {
    const auto logits = c_hat.data().subspan(i * nc, nc);
    const std::size_t k = argmax_class(logits);
    map.instances.push_back({pred_points(v_hat, i), Category::from_id(static_cast<int>(k)), sigmoid(logits[k])});
  }
  return map;
}

Tensor ris_loss(const Tensor& v_hat, const Tensor& c_hat, const RasterMask& gt_mask, const BevGrid& grid,
                const RisParams& prm) {
  require_heads(v_hat, c_hat);
  const std::size_t nc = c_hat.dim(1);
  const Shape mask_shape{static_cast<std::size_t>(grid.height), static_cast<std::size_t>(grid.width), nc};
  PERCMAP_REQUIRE(gt_mask.mask.defined() && gt_mask.mask.shape() == mask_shape,
                  "ris_loss: mask shape must be [H, W, N_c] of the grid");

  const std::size_t total_cells = gt_mask.mask.numel();
  std::vector<double> pred(total_cells, 0.0);
  std::vector<int> owner(total_cells, -1);  // logit index driving the cell
  for (std::size_t i = 0; i < v_hat.dim(0); ++i) {
    const auto logits = c_hat.data().subspan(i * nc, nc);
    const std::size_t k = argmax_class(logits);
    const double score = sigmoid(logits[k]);
    const bool closed = Category::from_id(static_cast<int>(k)).is_closed;
    for (std::size_t cell : raster_cells(pred_points(v_hat, i), closed, grid, prm.raster)) {
      const std::size_t idx = cell * nc + k;
      if (owner[idx] < 0 || score > pred[idx]) {
        pred[idx] = score;
        owner[idx] = static_cast<int>(i * nc + k);
      }
    }
  }

  const auto t = gt_mask.mask.data();
  const double eps = prm.log_eps;
  double total = 0.0;
  std::vector<double> dldp(total_cells, 0.0);
  for (std::size_t c = 0; c < total_cells; ++c) {
    const double p = pred[c];
    if (t[c] > 0.0) {
      if (p > eps) {
        total -= t[c] * std::log(p);
        dldp[c] -= t[c] / p;
      } else {
        total -= t[c] * std::log(eps);
      }
    }
    if (t[c] < 1.0) {
      if (1.0 - p > eps) {
        total -= (1.0 - t[c]) * std::log1p(-p);
        dldp[c] += (1.0 - t[c]) / (1.0 - p);
      } else {
        total -= (1.0 - t[c]) * std::log(eps);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(total_cells);
  return make_op_result(
      "ris_loss", {}, {total * inv}, {c_hat},
      [c_hat, owner = std::move(owner), dldp = std::move(dldp), inv](
          std::span<const double> g, std::span<std::vector<double>* const> gin) {
        for (std::size_t c = 0; c < owner.size(); ++c) {
          if (owner[c] < 0 || dldp[c] == 0.0) continue;
          const double s = sigmoid(c_hat[static_cast<std::size_t>(owner[c])]);
          (*gin[0])[static_cast<std::size_t>(owner[c])] += g[0] * inv * dldp[c] * s * (1.0 - s);
        }
      });
}

std::vector<std::vector<Point2>> equivalent_orderings(const MapInstance& gt) {
  const auto& pts = gt.points;
  const std::size_t n = pts.size();
  std::vector<std::vector<Point2>> out;
  if (!gt.closed()) {
    out.push_back(pts);
    out.emplace_back(pts.rbegin(), pts.rend());
    return out;
  }
  for (int dir = 0; dir < 2; ++dir) {
    for (std::size_t shift = 0; shift < n; ++shift) {
      std::vector<Point2> o(n);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = dir == 0 ? (shift + k) % n : (shift + n - k) % n;
        o[k] = pts[src];
      }
      out.push_back(std::move(o));
    }
  }
  return out;
}

double point_l1(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  PERCMAP_REQUIRE(a.size() == b.size() && !a.empty(), "point_l1: point counts differ");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += std::abs(a[k].x - b[k].x) + std::abs(a[k].y - b[k].y);
  return acc / static_cast<double>(a.size());
}

double focal_class_cost(std::span<const double> logits, int cls, const MatchingParams& prm) {
  constexpr double kEps = 1e-12;
  const double x = logits[static_cast<std::size_t>(cls)];
  const double p = sigmoid(x);
  const double neg = -std::log(1.0 - p + kEps) * (1.0 - prm.focal_alpha) * std::pow(p, prm.focal_gamma);
  const double pos = -std::log(p + kEps) * prm.focal_alpha * std::pow(1.0 - p, prm.focal_gamma);
  return pos - neg;
}

MatchingCost matching_cost(const Tensor& v_hat, const Tensor& c_hat, const VectorMap& gt,
                           const MatchingParams& prm) {
  require_heads(v_hat, c_hat);
  MatchingCost mc;
  mc.num_pred = v_hat.dim(0);
  mc.num_gt = gt.instances.size();
  mc.cost.assign(mc.num_pred * mc.num_gt, 0.0);
  mc.best_ordering.assign(mc.num_pred * mc.num_gt, 0);
  const std::size_t nc = c_hat.dim(1);
  for (std::size_t j = 0; j < mc.num_gt; ++j) {
    const auto& g = gt.instances[j];
    PERCMAP_REQUIRE(g.points.size() == v_hat.dim(1), "GT instances must be resampled to N_p points");
    PERCMAP_REQUIRE(g.category.id >= 0 && g.category.id < static_cast<int>(nc), "GT category out of range");
    const auto orders = equivalent_orderings(g);
    for (std::size_t i = 0; i < mc.num_pred; ++i) {
      const auto pts = pred_points(v_hat, i);
      double best = point_l1(pts, orders[0]);
      int best_k = 0;
      for (std::size_t k = 1; k < orders.size(); ++k) {
        const double d = point_l1(pts, orders[k]);
        if (d < best) {
          best = d;
          best_k = static_cast<int>(k);
        }
      }
      const double cls = focal_class_cost(c_hat.data().subspan(i * nc, nc), g.category.id, prm);
      mc.cost[i * mc.num_gt + j] = prm.cls_cost_weight * cls + prm.pts_cost_weight * best;
      mc.best_ordering[i * mc.num_gt + j] = best_k;
    }
  }
  return mc;
}

MatchingLosses matching_losses(const Tensor& v_hat, const Tensor& c_hat, const VectorMap& gt,
                               const MatchingParams& prm) {
  const MatchingCost mc = matching_cost(v_hat, c_hat, gt, prm);
  const std::size_t np = v_hat.dim(1);
  const std::size_t nc = c_hat.dim(1);

  Assignment asg;
  asg.gt_for_pred = solve_assignment(mc.cost, mc.num_pred, mc.num_gt);
  asg.pred_for_gt.assign(mc.num_gt, -1);
  asg.ordering_for_gt.assign(mc.num_gt, 0);
  for (std::size_t i = 0; i < mc.num_pred; ++i) {
    const int j = asg.gt_for_pred[i];
    if (j < 0) continue;
    asg.pred_for_gt[static_cast<std::size_t>(j)] = static_cast<int>(i);
    asg.ordering_for_gt[static_cast<std::size_t>(j)] = mc.best_ordering[i * mc.num_gt + static_cast<std::size_t>(j)];
    asg.total_cost += mc.cost[i * mc.num_gt + static_cast<std::size_t>(j)];
  }

  // Classification: one-hot targets for matched rows, background otherwise.
  std::vector<int> label(mc.num_pred, -1);
  for (std::size_t i = 0; i < mc.num_pred; ++i)
    if (asg.gt_for_pred[i] >= 0) label[i] = gt.instances[static_cast<std::size_t>(asg.gt_for_pred[i])].category.id;
  const double cls_norm = 1.0 / static_cast<double>(std::max<std::size_t>(mc.num_gt, 1));
  const double a = prm.focal_alpha, gm = prm.focal_gamma;
  double cls_total = 0.0;
  for (std::size_t i = 0; i < mc.num_pred; ++i)
    for (std::size_t k = 0; k < nc; ++k) {
      const double x = c_hat[i * nc + k];
      const double p = sigmoid(x);
      if (label[i] == static_cast<int>(k)) {
        cls_total += -a * std::pow(1.0 - p, gm) * log_p(x);
      } else {
        cls_total += -(1.0 - a) * std::pow(p, gm) * log_1mp(x);
      }
    }
  Tensor cls = make_op_result(
      "focal_cls_loss", {}, {cls_total * cls_norm}, {c_hat},
      [c_hat, label, nc, a, gm, cls_norm](std::span<const double> g, std::span<std::vector<double>* const> gin) {
        for (std::size_t i = 0; i < label.size(); ++i)
          for (std::size_t k = 0; k < nc; ++k) {
            const double x = c_hat[i * nc + k];
            const double p = sigmoid(x);
            double d;
            if (label[i] == static_cast<int>(k)) {
              d = a * std::pow(1.0 - p, gm) * (gm * p * log_p(x) - (1.0 - p));
            } else {
              d = (1.0 - a) * std::pow(p, gm) * (p - gm * (1.0 - p) * log_1mp(x));
            }
            (*gin[0])[i * nc + k] += g[0] * cls_norm * d;
          }
      });

  // Points: targets under the best ordering of each matched GT.
  std::vector<double> target(v_hat.numel(), 0.0);
  std::vector<char> matched(mc.num_pred, 0);
  std::size_t num_matched = 0;
  for (std::size_t j = 0; j < mc.num_gt; ++j) {
    const int i = asg.pred_for_gt[j];
    if (i < 0) continue;
    const auto orders = equivalent_orderings(gt.instances[j]);
    const auto& ord = orders[static_cast<std::size_t>(asg.ordering_for_gt[j])];
    for (std::size_t k = 0; k < np; ++k) {
      target[(static_cast<std::size_t>(i) * np + k) * 2] = ord[k].x;
      target[(static_cast<std::size_t>(i) * np + k) * 2 + 1] = ord[k].y;
    }
    matched[static_cast<std::size_t>(i)] = 1;
    ++num_matched;
  }
  const double pts_norm = num_matched ? 1.0 / static_cast<double>(num_matched * np) : 0.0;
  double pts_total = 0.0;
  for (std::size_t i = 0; i < mc.num_pred; ++i) {
    if (!matched[i]) continue;
    double acc = 0.0;
    for (std::size_t q = i * np * 2; q < (i + 1) * np * 2; ++q) acc += std::abs(v_hat[q] - target[q]);
    pts_total += acc;
  }
  Tensor pts = make_op_result(
      "l1_pts_loss", {}, {pts_total * pts_norm}, {v_hat},
      [v_hat, target = std::move(target), matched, np, pts_norm](std::span<const double> g,
                                                                 std::span<std::vector<double>* const> gin) {
        for (std::size_t i = 0; i < matched.size(); ++i) {
          if (!matched[i]) continue;
          for (std::size_t q = i * np * 2; q < (i + 1) * np * 2; ++q) {
            const double diff = v_hat[q] - target[q];
            const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            (*gin[0])[q] += g[0] * pts_norm * s;
          }
        }
      });

  return {cls, pts, std::move(asg)};
}

Tensor total_loss(const LossComponents& parts, const LossWeights& w) {
  std::vector<Tensor> inputs;
  std::vector<double> coef;
  auto take = [&](const Tensor& t, double c) {
    if (!t.defined()) return;
    PERCMAP_REQUIRE(t.numel() == 1, "loss components must be scalars");
    inputs.push_back(t);
    coef.push_back(c);
  };
  take(parts.heatmap, w.heatmap);
  take(parts.ris, w.ris);
  take(parts.cls, 1.0);
  take(parts.pts, 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) total += coef[i] * inputs[i].item();
  return make_op_result("total_loss", {}, {total}, inputs,
                        [coef](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t i = 0; i < coef.size(); ++i)
                            if (gin[i]) (*gin[i])[0] += g[0] * coef[i];
                        });
}

}  // namespace percmap
