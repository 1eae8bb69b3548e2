// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>

#include "acd/tensor.hpp"

namespace acd {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Compares backward() against central differences for every coordinate of
// every tensor in `params` (which must be leaves). The loss closure is
// re-evaluated from scratch for each perturbation. Always runs at 64-bit.
//
// Relative error per coordinate is
//   |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
// Central differences at h = 1e-5 resolve a derivative only to about
// eps * |f| / h, roughly 1e-11 for O(1) losses, so coordinates much below
// the floor must agree in absolute terms instead.
inline constexpr double kGradCheckFloor = 1e-6;
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params, double h = 1e-5);

// Single-input convenience form: f is evaluated at x.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

}  // namespace acd
