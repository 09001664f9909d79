#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "percmap/tensor.hpp"

// Differentiable operators over NHWC double tensors. Every op checks its
// shape contract (ContractError) and records an exact backward rule.
namespace percmap::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// [.., M, K] -> [.., K, M] for rank 2 or 3.
Tensor transpose_last2(const Tensor& a);

// [M,K] x [K,N] -> [M,N], or batched [B,M,K] x [B,K,N] -> [B,M,N].
Tensor matmul(const Tensor& a, const Tensor& b);

// x[..., Cin] * W[Cin, Cout] + b[Cout]; `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Cross-correlation with zero padding. input [N,H,W,Cin],
// weight [k,k,Cin,Cout] with k in {1,3}, bias [Cout] (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);

// [N,H,W,C] -> [N,H*f,W*f,C], each cell replicated f x f.
Tensor upsample_nearest(const Tensor& x, std::size_t factor);

// [N,H,W,C] -> [N,C]
Tensor mean_pool_spatial(const Tensor& x);

// Mean over one axis; the axis is removed from the shape.
Tensor mean_axis(const Tensor& x, std::size_t axis);

// [R,C] -> [R*k,C]; row r is repeated k times consecutively.
Tensor repeat_rows(const Tensor& x, std::size_t k);

// [C] -> [rows,C]
Tensor broadcast_rows(const Tensor& v, std::size_t rows);

// Row-wise softmax over the last axis of a rank-2 tensor.
Tensor softmax_rows(const Tensor& x);

// y[..., j] = x[..., j] * scale[j] + offset[j] with constant coefficients.
Tensor column_affine(const Tensor& x, std::span<const double> scale, std::span<const double> offset);

struct ScatterEntry {
  std::size_t dst;  // flattened position in the output (all axes but the last)
  std::size_t src;  // row of the source matrix
};

// out[dst, c] = max over entries hitting dst of src[src_row, c]; positions
// never hit stay exactly zero. Ties route the gradient to the smallest source
// row, so the result does not depend on entry order.
Tensor scatter_max(const Tensor& src, Shape out_shape, std::span<const ScatterEntry> entries);

}  // namespace percmap::ops
