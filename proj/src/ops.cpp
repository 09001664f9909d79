#include "percmap/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "percmap/errors.hpp"

namespace percmap::ops {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  PERCMAP_REQUIRE(a.defined() && b.defined(), std::string(op) + ": undefined operand");
  PERCMAP_REQUIRE(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op_result("add", a.shape(), std::move(out), {a, b},
                        [](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (auto* buf : gin) {
                            if (!buf) continue;
                            for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += g[i];
                          }
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op_result("sub", a.shape(), std::move(out), {a, b},
                        [](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          if (gin[0])
                            for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                          if (gin[1])
                            for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op_result("mul", a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          if (gin[0])
                            for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * b[i];
                          if (gin[1])
                            for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * a[i];
                        });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return make_op_result("scale", a.shape(), std::move(out), {a},
                        [s](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * s;
                        });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_op_result("sum", {}, {acc}, {a},
                        [](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (auto& v : *gin[0]) v += g[0];
                        });
}

Tensor mean(const Tensor& a) {
  PERCMAP_REQUIRE(a.numel() > 0, "mean of empty tensor");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  return make_op_result("mean", {}, {acc * inv}, {a},
                        [inv](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (auto& v : *gin[0]) v += g[0] * inv;
                        });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a[i]);
  auto y = std::make_shared<std::vector<double>>(out);
  return make_op_result("sigmoid", a.shape(), std::move(out), {a},
                        [y](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t i = 0; i < g.size(); ++i)
                            (*gin[0])[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
                        });
}

Tensor softplus(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a[i];
    out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  return make_op_result("softplus", a.shape(), std::move(out), {a},
                        [a](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t i = 0; i < g.size(); ++i)
                            (*gin[0])[i] += g[i] * stable_sigmoid(a[i]);
                        });
}

Tensor reshape(const Tensor& a, Shape shape) {
  PERCMAP_REQUIRE(shape_numel(shape) == a.numel(),
                  "reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op_result("reshape", std::move(shape), std::move(out), {a},
                        [](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                        });
}

Tensor transpose_last2(const Tensor& a) {
  PERCMAP_REQUIRE(a.rank() == 2 || a.rank() == 3, "transpose_last2 needs rank 2 or 3");
  const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  std::vector<double> out(a.numel());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) out[b * m * k + j * m + i] = a[b * m * k + i * k + j];
  return make_op_result(
      "transpose_last2", std::move(shape), std::move(out), {a},
      [batch, m, k](std::span<const double> g, std::span<std::vector<double>* const> gin) {
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j)
              (*gin[0])[b * m * k + i * k + j] += g[b * m * k + j * m + i];
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  PERCMAP_REQUIRE(a.defined() && b.defined(), "matmul: undefined operand");
  PERCMAP_REQUIRE(a.rank() == b.rank() && (a.rank() == 2 || a.rank() == 3),
                  "matmul needs two rank-2 or two rank-3 tensors");
  const bool batched = a.rank() == 3;
  const std::size_t nb = batched ? a.dim(0) : 1;
  PERCMAP_REQUIRE(!batched || b.dim(0) == nb, "matmul: batch mismatch");
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const std::size_t n = b.dim(b.rank() - 1);
  PERCMAP_REQUIRE(b.dim(b.rank() - 2) == k, "matmul: inner dimensions " + shape_str(a.shape()) +
                                                " x " + shape_str(b.shape()));
  std::vector<double> out(nb * m * n, 0.0);
  for (std::size_t bi = 0; bi < nb; ++bi) {
    const double* pa = a.data().data() + bi * m * k;
    const double* pb = b.data().data() + bi * k * n;
    double* pc = out.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = pa[i * k + p];
        for (std::size_t j = 0; j < n; ++j) pc[i * n + j] += av * pb[p * n + j];
      }
  }
  Shape shape = batched ? Shape{nb, m, n} : Shape{m, n};
  return make_op_result(
      "matmul", std::move(shape), std::move(out), {a, b},
      [a, b, nb, m, k, n](std::span<const double> g, std::span<std::vector<double>* const> gin) {
        for (std::size_t bi = 0; bi < nb; ++bi) {
          const double* pa = a.data().data() + bi * m * k;
          const double* pb = b.data().data() + bi * k * n;
          const double* pg = g.data() + bi * m * n;
          if (gin[0]) {
            double* ga = gin[0]->data() + bi * m * k;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += pg[i * n + j] * pb[p * n + j];
                ga[i * k + p] += acc;
              }
          }
          if (gin[1]) {
            double* gb = gin[1]->data() + bi * k * n;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t p = 0; p < k; ++p) {
                const double av = pa[i * k + p];
                for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * pg[i * n + j];
              }
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  PERCMAP_REQUIRE(x.defined() && weight.defined() && weight.rank() == 2, "linear: bad operands");
  PERCMAP_REQUIRE(x.rank() >= 1, "linear: input must have rank >= 1");
  const std::size_t cin = weight.dim(0);
  const std::size_t cout = weight.dim(1);
  PERCMAP_REQUIRE(x.shape().back() == cin, "linear: input channels " + shape_str(x.shape()) +
                                               " vs weight " + shape_str(weight.shape()));
  PERCMAP_REQUIRE(!bias.defined() || bias.shape() == Shape{cout}, "linear: bias shape");
  const std::size_t rows = x.numel() / cin;
  std::vector<double> out(rows * cout, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* y = out.data() + r * cout;
    if (bias.defined())
      for (std::size_t o = 0; o < cout; ++o) y[o] = bias[o];
    for (std::size_t i = 0; i < cin; ++i) {
      const double xv = x[r * cin + i];
      const double* w = weight.data().data() + i * cout;
      for (std::size_t o = 0; o < cout; ++o) y[o] += xv * w[o];
    }
  }
  Shape shape = x.shape();
  shape.back() = cout;
  return make_op_result(
      "linear", std::move(shape), std::move(out), {x, weight, bias},
      [x, weight, rows, cin, cout](std::span<const double> g,
                                   std::span<std::vector<double>* const> gin) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gy = g.data() + r * cout;
          for (std::size_t i = 0; i < cin; ++i) {
            const double* w = weight.data().data() + i * cout;
            if (gin[0]) {
              double acc = 0.0;
              for (std::size_t o = 0; o < cout; ++o) acc += gy[o] * w[o];
              (*gin[0])[r * cin + i] += acc;
            }
            if (gin[1]) {
              const double xv = x[r * cin + i];
              double* gw = gin[1]->data() + i * cout;
              for (std::size_t o = 0; o < cout; ++o) gw[o] += xv * gy[o];
            }
          }
          if (gin[2])
            for (std::size_t o = 0; o < cout; ++o) (*gin[2])[o] += gy[o];
        }
      });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  PERCMAP_REQUIRE(input.defined() && input.rank() == 4, "conv2d: input must be [N,H,W,C]");
  PERCMAP_REQUIRE(weight.defined() && weight.rank() == 4, "conv2d: weight must be [k,k,Cin,Cout]");
  const std::size_t k = weight.dim(0);
  PERCMAP_REQUIRE((k == 1 || k == 3) && weight.dim(1) == k, "conv2d: kernel must be 1x1 or 3x3");
  PERCMAP_REQUIRE(stride >= 1, "conv2d: stride must be >= 1");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), cin = input.dim(3);
  PERCMAP_REQUIRE(weight.dim(2) == cin, "conv2d: channel mismatch " + shape_str(input.shape()) +
                                            " vs " + shape_str(weight.shape()));
  const std::size_t cout = weight.dim(3);
  PERCMAP_REQUIRE(!bias.defined() || bias.shape() == Shape{cout}, "conv2d: bias shape");
  PERCMAP_REQUIRE(h + 2 * padding >= k && w + 2 * padding >= k, "conv2d: input smaller than kernel");
  const std::size_t oh = (h + 2 * padding - k) / stride + 1;
  const std::size_t ow = (w + 2 * padding - k) / stride + 1;

  const auto pad = static_cast<long>(padding);
  std::vector<double> out(n * oh * ow * cout, 0.0);
  const double* in = input.data().data();
  const double* wt = weight.data().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double* o = out.data() + ((b * oh + y) * ow + x) * cout;
        if (bias.defined())
          for (std::size_t co = 0; co < cout; ++co) o[co] = bias[co];
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(y * stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(x * stride + kx) - pad;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const double* px = in + ((b * h + iy) * w + ix) * cin;
            const double* pw = wt + (ky * k + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double xv = px[ci];
              const double* wrow = pw + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) o[co] += xv * wrow[co];
            }
          }
        }
      }

  return make_op_result(
      "conv2d", {n, oh, ow, cout}, std::move(out), {input, weight, bias},
      [=](std::span<const double> g, std::span<std::vector<double>* const> gin) {
        const double* in = input.data().data();
        const double* wt = weight.data().data();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
              const double* go = g.data() + ((b * oh + y) * ow + x) * cout;
              if (gin[2])
                for (std::size_t co = 0; co < cout; ++co) (*gin[2])[co] += go[co];
              for (std::size_t ky = 0; ky < k; ++ky) {
                const long iy = static_cast<long>(y * stride + ky) - pad;
                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const long ix = static_cast<long>(x * stride + kx) - pad;
                  if (ix < 0 || ix >= static_cast<long>(w)) continue;
                  const std::size_t in_off = ((b * h + iy) * w + ix) * cin;
                  const std::size_t w_off = (ky * k + kx) * cin * cout;
                  for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double* wrow = wt + w_off + ci * cout;
                    if (gin[0]) {
                      double acc = 0.0;
                      for (std::size_t co = 0; co < cout; ++co) acc += wrow[co] * go[co];
                      (*gin[0])[in_off + ci] += acc;
                    }
                    if (gin[1]) {
                      const double xv = in[in_off + ci];
                      double* gw = gin[1]->data() + w_off + ci * cout;
                      for (std::size_t co = 0; co < cout; ++co) gw[co] += xv * go[co];
                    }
                  }
                }
              }
            }
      });
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  PERCMAP_REQUIRE(a.defined() && b.defined() && a.rank() == b.rank(), "concat: rank mismatch");
  PERCMAP_REQUIRE(axis < a.rank(), "concat: axis " + std::to_string(axis) + " out of bounds");
  for (std::size_t i = 0; i < a.rank(); ++i) {
    PERCMAP_REQUIRE(i == axis || a.dim(i) == b.dim(i),
                    "concat: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t sa = a.dim(axis) * inner;
  const std::size_t sb = b.dim(axis) * inner;
  std::vector<double> out;
  out.reserve(a.numel() + b.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    out.insert(out.end(), a.data().begin() + o * sa, a.data().begin() + (o + 1) * sa);
    out.insert(out.end(), b.data().begin() + o * sb, b.data().begin() + (o + 1) * sb);
  }
  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  return make_op_result("concat", std::move(shape), std::move(out), {a, b},
                        [outer, sa, sb](std::span<const double> g,
                                        std::span<std::vector<double>* const> gin) {
                          for (std::size_t o = 0; o < outer; ++o) {
                            const double* row = g.data() + o * (sa + sb);
                            if (gin[0])
                              for (std::size_t i = 0; i < sa; ++i) (*gin[0])[o * sa + i] += row[i];
                            if (gin[1])
                              for (std::size_t i = 0; i < sb; ++i)
                                (*gin[1])[o * sb + i] += row[sa + i];
                          }
                        });
}

Tensor upsample_nearest(const Tensor& x, std::size_t f) {
  PERCMAP_REQUIRE(x.defined() && x.rank() == 4, "upsample_nearest: input must be [N,H,W,C]");
  PERCMAP_REQUIRE(f >= 1, "upsample_nearest: factor must be >= 1");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t oh = h * f, ow = w * f;
  std::vector<double> out(n * oh * ow * c);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const double* src = x.data().data() + ((b * h + y / f) * w + xx / f) * c;
        std::copy(src, src + c, out.data() + ((b * oh + y) * ow + xx) * c);
      }
  return make_op_result("upsample_nearest", {n, oh, ow, c}, std::move(out), {x},
                        [=](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t b = 0; b < n; ++b)
                            for (std::size_t y = 0; y < oh; ++y)
                              for (std::size_t xx = 0; xx < ow; ++xx) {
                                const double* go = g.data() + ((b * oh + y) * ow + xx) * c;
                                double* gi = gin[0]->data() + ((b * h + y / f) * w + xx / f) * c;
                                for (std::size_t ch = 0; ch < c; ++ch) gi[ch] += go[ch];
                              }
                        });
}

Tensor mean_pool_spatial(const Tensor& x) {
  PERCMAP_REQUIRE(x.defined() && x.rank() == 4, "mean_pool_spatial: input must be [N,H,W,C]");
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  PERCMAP_REQUIRE(hw > 0, "mean_pool_spatial: empty spatial extent");
  const double inv = 1.0 / static_cast<double>(hw);
  std::vector<double> out(n * c, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] += x[(b * hw + p) * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] *= inv;
  }
  return make_op_result("mean_pool_spatial", {n, c}, std::move(out), {x},
                        [=](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t b = 0; b < n; ++b)
                            for (std::size_t p = 0; p < hw; ++p)
                              for (std::size_t ch = 0; ch < c; ++ch)
                                (*gin[0])[(b * hw + p) * c + ch] += g[b * c + ch] * inv;
                        });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  PERCMAP_REQUIRE(x.defined() && axis < x.rank(), "mean_axis: axis out of bounds");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  PERCMAP_REQUIRE(len > 0, "mean_axis: empty axis");
  const double inv = 1.0 / static_cast<double>(len);
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * len + l) * inner + i];
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] *= inv;
  }
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<long>(axis));
  return make_op_result("mean_axis", std::move(shape), std::move(out), {x},
                        [=](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t l = 0; l < len; ++l)
                              for (std::size_t i = 0; i < inner; ++i)
                                (*gin[0])[(o * len + l) * inner + i] += g[o * inner + i] * inv;
                        });
}

Tensor repeat_rows(const Tensor& x, std::size_t k) {
  PERCMAP_REQUIRE(x.defined() && x.rank() == 2, "repeat_rows: input must be rank 2");
  PERCMAP_REQUIRE(k >= 1, "repeat_rows: factor must be >= 1");
  const std::size_t rows = x.dim(0), c = x.dim(1);
  std::vector<double> out(rows * k * c);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < k; ++j)
      std::copy(x.data().begin() + r * c, x.data().begin() + (r + 1) * c,
                out.begin() + (r * k + j) * c);
  return make_op_result("repeat_rows", {rows * k, c}, std::move(out), {x},
                        [=](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < k; ++j)
                              for (std::size_t ch = 0; ch < c; ++ch)
                                (*gin[0])[r * c + ch] += g[(r * k + j) * c + ch];
                        });
}

Tensor broadcast_rows(const Tensor& v, std::size_t rows) {
  PERCMAP_REQUIRE(v.defined() && v.rank() == 1, "broadcast_rows: input must be rank 1");
  const std::size_t c = v.dim(0);
  std::vector<double> out(rows * c);
  for (std::size_t r = 0; r < rows; ++r) std::copy(v.data().begin(), v.data().end(), out.begin() + r * c);
  return make_op_result("broadcast_rows", {rows, c}, std::move(out), {v},
                        [rows, c](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t ch = 0; ch < c; ++ch) (*gin[0])[ch] += g[r * c + ch];
                        });
}

Tensor softmax_rows(const Tensor& x) {
  PERCMAP_REQUIRE(x.defined() && x.rank() == 2, "softmax_rows: input must be rank 2");
  const std::size_t rows = x.dim(0), k = x.dim(1);
  PERCMAP_REQUIRE(k > 0, "softmax_rows: empty rows");
  std::vector<double> out(rows * k);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * k;
    const double mx = *std::max_element(xr, xr + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += (out[r * k + j] = std::exp(xr[j] - mx));
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] *= inv;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return make_op_result("softmax_rows", x.shape(), std::move(out), {x},
                        [y, rows, k](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t r = 0; r < rows; ++r) {
                            const double* yr = y->data() + r * k;
                            const double* gr = g.data() + r * k;
                            double dot = 0.0;
                            for (std::size_t j = 0; j < k; ++j) dot += gr[j] * yr[j];
                            for (std::size_t j = 0; j < k; ++j) (*gin[0])[r * k + j] += yr[j] * (gr[j] - dot);
                          }
                        });
}

Tensor column_affine(const Tensor& x, std::span<const double> scale, std::span<const double> offset) {
  PERCMAP_REQUIRE(x.defined() && x.rank() >= 1, "column_affine: bad input");
  const std::size_t k = x.shape().back();
  PERCMAP_REQUIRE(scale.size() == k && offset.size() == k, "column_affine: coefficient length");
  std::vector<double> sc(scale.begin(), scale.end());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * scale[i % k] + offset[i % k];
  return make_op_result("column_affine", x.shape(), std::move(out), {x},
                        [sc, k](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * sc[i % k];
                        });
}

Tensor scatter_max(const Tensor& src, Shape out_shape, std::span<const ScatterEntry> entries) {
  PERCMAP_REQUIRE(src.defined() && src.rank() == 2, "scatter_max: source must be [M,C]");
  PERCMAP_REQUIRE(!out_shape.empty() && out_shape.back() == src.dim(1),
                  "scatter_max: output channels must match source");
  const std::size_t c = src.dim(1);
  const std::size_t positions = shape_numel(out_shape) / c;
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<double> out(positions * c, 0.0);
  auto winner = std::make_shared<std::vector<std::size_t>>(positions * c, kNone);
  for (const auto& e : entries) {
    PERCMAP_REQUIRE(e.dst < positions && e.src < src.dim(0), "scatter_max: index out of range");
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = src[e.src * c + ch];
      std::size_t& wi = (*winner)[e.dst * c + ch];
      double& o = out[e.dst * c + ch];
      if (wi == kNone || v > o || (v == o && e.src < wi)) {
        o = v;
        wi = e.src;
      }
    }
  }
  return make_op_result("scatter_max", std::move(out_shape), std::move(out), {src},
                        [winner, c](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            const std::size_t wi = (*winner)[i];
                            if (wi != kNone) (*gin[0])[wi * c + i % c] += g[i];
                          }
                        });
}

}  // namespace percmap::ops
