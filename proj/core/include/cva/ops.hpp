#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cva/tensor.hpp"

// Differentiable tensor operations. Every function records a node on the
// calling thread's tape when one of its inputs requires grad.

namespace cva {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);

/// x[..., d] + bias[d], broadcast over all leading axes.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x[m, ...] + bias[m], broadcast over all trailing axes.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape new_shape);

/// Numerically stable softmax along `axis` (max-subtracted).
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean over the rows of a matrix: [n x d] -> [d].
Tensor mean_rows(const Tensor& x);

/// x[.. x d_in] . weight[d_in x d_out] + bias[d_out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Per-position channel map on a [c_in x h x w] map with weight [c_out x c_in].
/// Equivalent to a 1x1 convolution.
Tensor channel_map(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// x[c_in x h x w], weight[c_out x c_in x kh x kw], bias[c_out] (may be empty).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opt = {});
Tensor conv2d(const Tensor& x, const Tensor& weight, Conv2dOptions opt = {});

/// Parameter-free per-channel normalization of a [c x h x w] map.
Tensor instance_norm(const Tensor& x, double eps = 1e-5);
/// Layer normalization over the last axis with affine gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

/// out[i] = x[i, index[i]] for a [n x k] matrix.
Tensor pick(const Tensor& x, std::span<const std::size_t> index);

}  // namespace cva
