// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace acd {

namespace {

double eval_scalar(const std::function<Tensor()>& loss_fn) {
    NoGradGuard no_grad;
    Tensor loss = loss_fn();
    if (loss.numel() != 1) {
        throw ShapeError("grad_check: function must be scalar-valued, got " + to_string(loss.shape()));
    }
    double v = loss.item();
    if (!std::isfinite(v)) {
        throw NonFiniteError("grad_check: non-finite function value");
    }
    return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params, double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("grad_check: step must be positive");
    }
    PrecisionGuard precision(Precision::f64);
    Graph& graph = Graph::local();
    graph.reset();

    std::vector<bool> prev_flags;
    for (Tensor& p : params) {
        if (!p.is_leaf()) {
            throw std::invalid_argument("grad_check: parameters must be leaf tensors");
        }
        prev_flags.push_back(p.requires_grad());
        p.set_requires_grad(true);
        p.clear_grad();
    }

    std::vector<std::vector<double>> analytic;
    {
        Tensor loss = loss_fn();
        if (loss.numel() != 1) {
            throw ShapeError("grad_check: function must be scalar-valued, got " + to_string(loss.shape()));
        }
        if (loss.requires_grad()) {
            backward(loss);
        }
        for (Tensor& p : params) {
            if (p.has_grad()) {
                analytic.emplace_back(p.grad().begin(), p.grad().end());
            } else {
                analytic.emplace_back(p.numel(), 0.0);
            }
        }
    }
    graph.reset();

    GradCheckResult result;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto values = params[t].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + h;
            const double fp = eval_scalar(loss_fn);
            values[i] = orig - h;
            const double fm = eval_scalar(loss_fn);
            values[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[t][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > result.max_rel_error || (t == 0 && i == 0)) {
                result = {rel, t, i, a, numeric};
            }
        }
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        params[t].clear_grad();
        params[t].set_requires_grad(prev_flags[t]);
    }
    return result;
}

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    Tensor leaf = x.detach();
    std::vector<Tensor> params{leaf};
    return grad_check([&] { return f(leaf); }, params, h);
}

}  // namespace acd
