#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace oracle {

using percmap::BevGrid;
using percmap::Category;
using percmap::FramePair;
using percmap::MapInstance;
using percmap::MatchMode;
using percmap::VectorMap;

Tensor random_tensor(percmap::Xoshiro256& rng, const Shape& shape, double lo, double hi, bool requires_grad) {
  std::vector<double> d(percmap::shape_numel(shape));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor::from_data(shape, std::move(d), requires_grad);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  return max_abs_diff(std::vector<double>(a.data().begin(), a.data().end()),
                      std::vector<double>(b.data().begin(), b.data().end()));
}

std::vector<double> conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3);
  const std::size_t k = w.dim(0), co = w.dim(3);
  const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(n * ho * wo * co, 0.0);
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t oc = 0; oc < co; ++oc) {
          double acc = b.defined() ? b[oc] : 0.0;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
              for (std::size_t ic = 0; ic < ci; ++ic)
                acc += x[((in * h + iy) * wd + ix) * ci + ic] * w[((ky * k + kx) * ci + ic) * co + oc];
            }
          out[((in * ho + oy) * wo + ox) * co + oc] = acc;
        }
  return out;
}

std::vector<double> matmul(const Tensor& a, const Tensor& b) {
  const bool batched = a.rank() == 3;
  const std::size_t bs = batched ? a.dim(0) : 1;
  const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1), n = b.dim(b.rank() - 1);
  std::vector<double> out(bs * m * n, 0.0);
  for (std::size_t z = 0; z < bs; ++z)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < k; ++t) acc += a[(z * m + i) * k + t] * b[(z * k + t) * n + j];
        out[(z * m + i) * n + j] = acc;
      }
  return out;
}

std::vector<double> linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t ci = w.dim(0), co = w.dim(1), rows = x.numel() / ci;
  std::vector<double> out(rows * co);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < co; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < ci; ++i) acc += x[r * ci + i] * w[i * co + j];
      out[r * co + j] = acc + (b.defined() ? b[j] : 0.0);
    }
  return out;
}

std::vector<double> sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return out;
}

std::vector<double> softplus(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log1p(std::exp(x[i]));
  return out;
}

std::vector<double> concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  std::size_t outer = 1, ia = 1, ib = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis; i < a.rank(); ++i) {
    ia *= a.dim(i);
    ib *= b.dim(i);
  }
  std::vector<double> out;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < ia; ++i) out.push_back(a[o * ia + i]);
    for (std::size_t i = 0; i < ib; ++i) out.push_back(b[o * ib + i]);
  }
  return out;
}

std::vector<double> upsample_nearest(const Tensor& x, std::size_t f) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  std::vector<double> out;
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t y = 0; y < h * f; ++y)
      for (std::size_t xx = 0; xx < w * f; ++xx)
        for (std::size_t ch = 0; ch < c; ++ch) out.push_back(x[((in * h + y / f) * w + xx / f) * c + ch]);
  return out;
}

std::vector<double> mean_pool_spatial(const Tensor& x) {
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  std::vector<double> out(n * c, 0.0);
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t p = 0; p < hw; ++p) acc += x[(in * hw + p) * c + ch];
      out[in * c + ch] = acc / static_cast<double>(hw);
    }
  return out;
}

std::vector<double> mean_axis(const Tensor& x, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (std::size_t a = 0; a < len; ++a) acc += x[(o * len + a) * inner + i];
      out[o * inner + i] = acc / static_cast<double>(len);
    }
  return out;
}

std::vector<double> softmax_rows(const Tensor& x) {
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < r; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, x[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[i * c + j] - m);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = std::exp(x[i * c + j] - m) / z;
  }
  return out;
}

std::vector<double> transpose_last2(const Tensor& x) {
  const bool batched = x.rank() == 3;
  const std::size_t bs = batched ? x.dim(0) : 1;
  const std::size_t m = x.dim(x.rank() - 2), k = x.dim(x.rank() - 1);
  std::vector<double> out(x.numel());
  for (std::size_t z = 0; z < bs; ++z)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) out[(z * k + j) * m + i] = x[(z * m + i) * k + j];
  return out;
}

std::vector<double> repeat_rows(const Tensor& x, std::size_t k) {
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t j = 0; j < c; ++j) out.push_back(x[i * c + j]);
  return out;
}

std::vector<double> broadcast_rows(const Tensor& v, std::size_t rows) {
  std::vector<double> out;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < v.numel(); ++j) out.push_back(v[j]);
  return out;
}

std::vector<double> column_affine(const Tensor& x, const std::vector<double>& s, const std::vector<double>& o) {
  const std::size_t c = s.size();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s[i % c] + o[i % c];
  return out;
}

std::vector<double> scatter_max(const Tensor& src, std::size_t out_rows,
                                const std::vector<percmap::ops::ScatterEntry>& entries) {
  const std::size_t c = src.dim(1);
  std::vector<double> out(out_rows * c, 0.0);
  for (std::size_t r = 0; r < out_rows; ++r) {
    bool any = false;
    for (const auto& e : entries) {
      if (e.dst != r) continue;
      for (std::size_t j = 0; j < c; ++j) {
        const double v = src[e.src * c + j];
        out[r * c + j] = any ? std::max(out[r * c + j], v) : v;
      }
      any = true;
    }
  }
  return out;
}

GradCheck check_gradients(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                          const std::vector<std::string>& names, double h, double floor, std::size_t max_per_leaf) {
  for (const auto& l : leaves) l.impl()->grad.assign(l.numel(), 0.0);
  percmap::backward(f());
  std::vector<std::vector<double>> analytic;
  for (const auto& l : leaves) analytic.emplace_back(l.grad().begin(), l.grad().end());

  GradCheck res;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    auto data = leaf.mutable_data();
    const std::size_t n = data.size();
    const std::size_t stride = max_per_leaf == 0 || n <= max_per_leaf ? 1 : (n + max_per_leaf - 1) / max_per_leaf;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = data[i];
      data[i] = orig + h;
      const double fp = f().item();
      data[i] = orig - h;
      const double fm = f().item();
      data[i] = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double a = analytic[li][i];
      const double rel = std::fabs(a - num) / std::max({std::fabs(a), std::fabs(num), floor});
      ++res.checked;
      if (rel > res.max_rel) {
        res.max_rel = rel;
        res.worst = (li < names.size() ? names[li] : "leaf" + std::to_string(li)) + "[" + std::to_string(i) +
                    "] analytic " + std::to_string(a) + " numeric " + std::to_string(num);
      }
    }
  }
  return res;
}

std::vector<Point2> resample_walk(const std::vector<Point2>& pts, bool closed, std::size_t n, std::size_t substeps) {
  std::vector<Point2> chain = pts;
  if (closed) chain.push_back(pts.front());
  std::vector<double> len;
  double total = 0.0;
  for (std::size_t i = 1; i < chain.size(); ++i) {
    len.push_back(std::sqrt((chain[i].x - chain[i - 1].x) * (chain[i].x - chain[i - 1].x) +
                            (chain[i].y - chain[i - 1].y) * (chain[i].y - chain[i - 1].y)));
    total += len.back();
  }
  if (total == 0.0) return std::vector<Point2>(n, pts.front());
  const double spacing = closed ? total / static_cast<double>(n) : total / static_cast<double>(n - 1);
  const double ds = total / static_cast<double>(substeps);
  std::vector<Point2> out;
  std::size_t seg = 0, next = 0;
  double seg_start = 0.0;
  for (std::size_t j = 0; j <= substeps && next < n; ++j) {
    const double s = ds * static_cast<double>(j);
    while (seg + 1 < len.size() && seg_start + len[seg] < s) seg_start += len[seg++];
    const double t = len[seg] > 0.0 ? std::clamp((s - seg_start) / len[seg], 0.0, 1.0) : 0.0;
    const Point2 p{chain[seg].x + t * (chain[seg + 1].x - chain[seg].x),
                   chain[seg].y + t * (chain[seg + 1].y - chain[seg].y)};
    // Each target arclength takes the nearest sub-step.
    while (next < n && std::llround(spacing * static_cast<double>(next) / ds) == static_cast<long long>(j)) {
      out.push_back(p);
      ++next;
    }
  }
  return out;
}

double chamfer_loop(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  auto directed = [](const std::vector<Point2>& p, const std::vector<Point2>& q) {
    double acc = 0.0;
    for (const auto& s : p) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& t : q) best = std::min(best, std::sqrt((s.x - t.x) * (s.x - t.x) + (s.y - t.y) * (s.y - t.y)));
      acc += best;
    }
    return acc / static_cast<double>(p.size());
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

namespace {

double seg_dist(double px, double py, double ax, double ay, double bx, double by) {
  // Distance via the foot of the perpendicular when it falls inside the
  // segment, otherwise the nearer endpoint.
  const double vx = bx - ax, vy = by - ay;
  const double wx = px - ax, wy = py - ay;
  const double c1 = vx * wx + vy * wy;
  const double da = std::sqrt(wx * wx + wy * wy);
  if (c1 <= 0.0) return da;
  const double c2 = vx * vx + vy * vy;
  const double db = std::sqrt((px - bx) * (px - bx) + (py - by) * (py - by));
  if (c2 <= c1) return db;
  const double cross = vx * wy - vy * wx;
  return std::fabs(cross) / std::sqrt(c2);
}

int winding(double px, double py, const std::vector<std::pair<double, double>>& poly) {
  int wn = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto [x0, y0] = poly[i];
    const auto [x1, y1] = poly[(i + 1) % poly.size()];
    const double side = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0);
    if (y0 <= py) {
      if (y1 > py && side > 0) ++wn;
    } else {
      if (y1 <= py && side < 0) --wn;
    }
  }
  return wn;
}

}  // namespace

std::vector<std::size_t> raster_cells(const std::vector<Point2>& pts, bool closed, const BevGrid& grid,
                                      double line_width, bool fill) {
  std::vector<std::pair<double, double>> cp;
  for (const auto& p : pts)
    cp.emplace_back((p.x - grid.x_min) / (grid.x_max - grid.x_min) * grid.width,
                    (p.y - grid.y_min) / (grid.y_max - grid.y_min) * grid.height);
  const std::size_t nseg = closed && cp.size() > 2 ? cp.size() : cp.size() - 1;
  std::vector<std::size_t> cells;
  for (int row = 0; row < grid.height; ++row)
    for (int col = 0; col < grid.width; ++col) {
      const double px = col + 0.5, py = row + 0.5;
      bool hit = false;
      for (std::size_t s = 0; s < nseg && !hit; ++s) {
        const auto a = cp[s], b = cp[(s + 1) % cp.size()];
        hit = seg_dist(px, py, a.first, a.second, b.first, b.second) < line_width / 2.0;
      }
      if (!hit && closed && fill && cp.size() >= 3) hit = winding(px, py, cp) != 0;
      if (hit) cells.push_back(static_cast<std::size_t>(row) * grid.width + col);
    }
  return cells;
}

std::vector<double> heatmap(const VectorMap& map, const percmap::CameraRig& rig, double sigma) {
  const auto& c0 = rig.cameras.front();
  const std::size_t h = c0.image_height, w = c0.image_width, nc = 3;
  std::vector<double> out(rig.size() * h * w * nc, 0.0);
  for (std::size_t cam = 0; cam < rig.size(); ++cam) {
    const auto& c = rig.cameras[cam];
    const auto R = c.rotation();
    const auto t = c.translation();
    for (const auto& inst : map.instances)
      for (const auto& kp : inst.points) {
        const double xc = R[0] * kp.x + R[1] * kp.y + t[0];
        const double yc = R[3] * kp.x + R[4] * kp.y + t[1];
        const double zc = R[6] * kp.x + R[7] * kp.y + t[2];
        if (zc <= percmap::kDepthEps) continue;
        const double u = c.fx * xc / zc + c.cx, v = c.fy * yc / zc + c.cy;
        if (!(u >= 0 && v >= 0 && u < c.image_width && v < c.image_height)) continue;
        const double u0 = std::floor(u), v0 = std::floor(v);
        for (std::size_t py = 0; py < h; ++py)
          for (std::size_t px = 0; px < w; ++px) {
            const double d2 = (px - u0) * (px - u0) + (py - v0) * (py - v0);
            if (d2 > 9.0 * sigma * sigma) continue;
            double& cell = out[((cam * h + py) * w + px) * nc + inst.category.id];
            cell = std::max(cell, std::exp(-d2 / (2.0 * sigma * sigma)));
          }
      }
  }
  return out;
}

BruteMatch brute_matching(const Tensor& v_hat, const Tensor& c_hat, const VectorMap& gt,
                          const percmap::MatchingParams& prm) {
  const std::size_t np = v_hat.dim(0), npts = v_hat.dim(1), nc = c_hat.dim(1), ng = gt.instances.size();
  auto pair_cost = [&](std::size_t i, std::size_t j) {
    const auto& g = gt.instances[j];
    // Every rotation in both directions for closed chains, both directions
    // for open ones.
    double best = std::numeric_limits<double>::infinity();
    const std::size_t shifts = g.closed() ? npts : 1;
    for (int dir = 0; dir < 2; ++dir)
      for (std::size_t s = 0; s < shifts; ++s) {
        double l1 = 0.0;
        for (std::size_t k = 0; k < npts; ++k) {
          std::size_t idx = (k + s) % npts;
          if (dir == 1) idx = npts - 1 - idx;
          l1 += std::fabs(v_hat[(i * npts + k) * 2] - g.points[idx].x) +
                std::fabs(v_hat[(i * npts + k) * 2 + 1] - g.points[idx].y);
        }
        best = std::min(best, l1 / static_cast<double>(npts));
      }
    const double x = c_hat[i * nc + g.category.id];
    const double p = 1.0 / (1.0 + std::exp(-x));
    const double a = prm.focal_alpha, gm = prm.focal_gamma;
    const double cls = -a * std::pow(1 - p, gm) * std::log(p + 1e-12) + (1 - a) * std::pow(p, gm) * std::log(1 - p + 1e-12);
    return prm.cls_cost_weight * cls + prm.pts_cost_weight * best;
  };
  BruteMatch best{std::numeric_limits<double>::infinity(), {}};
  std::vector<std::size_t> perm(np);
  std::iota(perm.begin(), perm.end(), 0);
  // GT j takes prediction perm[j]; permutations of the tail beyond ng repeat,
  // which only costs time.
  do {
    double total = 0.0;
    for (std::size_t j = 0; j < ng; ++j) total += pair_cost(perm[j], j);
    if (total < best.total_cost) {
      best.total_cost = total;
      best.gt_for_pred.assign(np, -1);
      for (std::size_t j = 0; j < ng; ++j) best.gt_for_pred[perm[j]] = static_cast<int>(j);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (ng == 0) best = {0.0, std::vector<int>(np, -1)};
  return best;
}

namespace {

struct Ranked {
  double conf;
  std::size_t frame;
  std::size_t index;
  bool tp;
};

}  // namespace

namespace {

struct FrameCd {
  std::vector<std::size_t> pi, gi;
  std::vector<double> cd;  // [P x G]
  std::vector<std::size_t> order;
};

double brute_ap_one(const std::vector<FramePair>& frames, const std::vector<FrameCd>& fcd, double threshold,
                    MatchMode mode) {
  std::vector<Ranked> all;
  std::size_t num_gt = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& F = fcd[f];
    const std::size_t P = F.pi.size(), G = F.gi.size();
    num_gt += G;
    const auto& cd = F.cd;
    // Enumerate every map pred -> {GT, none}; keep the injective ones.
    std::vector<int> assign(P, -1), chosen;
    std::size_t best_tp = 0;
    double best_sum = std::numeric_limits<double>::infinity();
    std::size_t consistent = 0;
    std::size_t total = 1;
    for (std::size_t a = 0; a < P; ++a) total *= G + 1;
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t c = code;
      std::vector<char> used(G, 0);
      bool ok = true;
      for (std::size_t a = 0; a < P; ++a) {
        const std::size_t d = c % (G + 1);
        c /= G + 1;
        assign[a] = d == G ? -1 : static_cast<int>(d);
        if (assign[a] >= 0) {
          if (used[assign[a]]) ok = false;
          used[assign[a]] = 1;
        }
      }
      if (!ok) continue;
      if (mode == MatchMode::kGreedy) {
        std::vector<char> taken(G, 0);
        bool fits = true;
        for (std::size_t r = 0; r < P && fits; ++r) {
          const std::size_t a = F.order[r];
          int nearest = -1;
          for (std::size_t b = 0; b < G; ++b)
            if (!taken[b] && (nearest < 0 || cd[a * G + b] < cd[a * G + nearest])) nearest = static_cast<int>(b);
          if (assign[a] >= 0) {
            fits = assign[a] == nearest && cd[a * G + nearest] < threshold;
            taken[assign[a]] = 1;
          } else {
            fits = nearest < 0 || !(cd[a * G + nearest] < threshold);
          }
        }
        if (fits) {
          ++consistent;
          chosen = assign;
        }
      } else {
        std::size_t tp = 0;
        double s = 0.0;
        bool valid = true;
        for (std::size_t a = 0; a < P; ++a)
          if (assign[a] >= 0) {
            if (!(cd[a * G + assign[a]] < threshold)) valid = false;
            ++tp;
            s += cd[a * G + assign[a]];
          }
        if (!valid) continue;
        if (chosen.empty() || tp > best_tp || (tp == best_tp && s < best_sum)) {
          best_tp = tp;
          best_sum = s;
          chosen = assign;
        }
      }
    }
    if (mode == MatchMode::kGreedy && consistent != 1) return -1.0;
    if (chosen.empty()) chosen.assign(P, -1);
    for (std::size_t a = 0; a < P; ++a)
      all.push_back({frames[f].pred.instances[F.pi[a]].confidence, f, F.pi[a], chosen[a] >= 0});
  }
  if (num_gt == 0) return 0.0;
  std::sort(all.begin(), all.end(), [](const Ranked& x, const Ranked& y) {
    if (x.conf != y.conf) return x.conf > y.conf;
    if (x.frame != y.frame) return x.frame < y.frame;
    return x.index < y.index;
  });
  std::vector<double> precision(all.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    tp += all[k].tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  // Interpolated precision: best precision at this rank or any later one.
  for (std::size_t k = all.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  for (std::size_t k = 0; k < all.size(); ++k)
    if (all[k].tp) ap += precision[k];
  return ap / static_cast<double>(num_gt);
}

}  // namespace

std::vector<double> brute_ap(const std::vector<FramePair>& frames, const Category& cat,
                             const std::vector<double>& thresholds, std::size_t n_eval, MatchMode mode) {
  std::vector<FrameCd> fcd(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    auto& F = fcd[f];
    for (std::size_t i = 0; i < frames[f].pred.instances.size(); ++i)
      if (frames[f].pred.instances[i].category.id == cat.id) F.pi.push_back(i);
    for (std::size_t j = 0; j < frames[f].gt.instances.size(); ++j)
      if (frames[f].gt.instances[j].category.id == cat.id) F.gi.push_back(j);
    const std::size_t P = F.pi.size(), G = F.gi.size();
    F.cd.resize(P * G);
    for (std::size_t a = 0; a < P; ++a)
      for (std::size_t b = 0; b < G; ++b)
        F.cd[a * G + b] = chamfer_loop(percmap::resample_polyline(frames[f].pred.instances[F.pi[a]], n_eval).points,
                                       percmap::resample_polyline(frames[f].gt.instances[F.gi[b]], n_eval).points);
    F.order.resize(P);
    std::iota(F.order.begin(), F.order.end(), 0);
    std::stable_sort(F.order.begin(), F.order.end(), [&](std::size_t x, std::size_t y) {
      return frames[f].pred.instances[F.pi[x]].confidence > frames[f].pred.instances[F.pi[y]].confidence;
    });
  }
  std::vector<double> out;
  for (double t : thresholds) out.push_back(brute_ap_one(frames, fcd, t, mode));
  return out;
}

VectorMap random_map(percmap::Xoshiro256& rng, std::size_t max_per_cat, bool with_conf, double extent) {
  VectorMap m;
  for (int c = 0; c < 3; ++c) {
    const std::size_t count = rng.below(max_per_cat + 1);
    for (std::size_t i = 0; i < count; ++i) {
      MapInstance inst;
      inst.category = Category::from_id(c);
      const std::size_t np = (inst.closed() ? 3 : 2) + rng.below(3);
      const double cx = rng.uniform(-extent, extent), cy = rng.uniform(-extent, extent);
      for (std::size_t k = 0; k < np; ++k) inst.points.push_back({cx + rng.uniform(-3, 3), cy + rng.uniform(-3, 3)});
      inst.confidence = with_conf ? rng.uniform(0.05, 1.0) : 1.0;
      m.instances.push_back(inst);
    }
  }
  return m;
}

}  // namespace oracle
