// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations. Every op validates shapes and throws ShapeError
// naming the op and the offending shapes; every output is checked for
// non-finite values.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "acd/tensor.hpp"

namespace acd {

// Elementwise with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// 2-D transpose.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
// Splits into `parts` equal slices along axis.
std::vector<Tensor> split(const Tensor& x, std::size_t parts, std::size_t axis);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
// mean((a - b)^2) over all elements; shapes must match exactly.
Tensor mse(const Tensor& a, const Tensor& b);

// Normalizes along `axis`; gain/bias (length shape[axis]) are optional.
Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gain = {}, const Tensor& bias = {},
                  double eps = 1e-6);
// tanh approximation.
Tensor gelu(const Tensor& x);
Tensor silu(const Tensor& x);

// Gathers rows of table [V,D] for ids laid out as ids_shape; output ids_shape+[D].
// Ids equal to padding_idx produce zero rows and never receive gradient.
Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& ids_shape,
                 std::optional<int> padding_idx = std::nullopt);

// Mean over non-overlapping windows of `stride` along one axis.
Tensor avg_pool(const Tensor& x, std::size_t axis, std::size_t stride);
// Keeps index i*factor along each listed axis (top-left representative).
Tensor nearest_downsample(const Tensor& x, std::span<const std::size_t> axes, std::size_t factor);

}  // namespace acd
