// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Rectified-flow noising z_t = (1-t) z0 + t eps, the flow-matching loss
// against the target z0 - eps, and an Euler sampler with classifier-free
// guidance.
//
// The regression target z0 - eps points from noise toward data, so sampling
// walks t from 1 down to 0 and adds v * (t_k - t_{k+1}) at each step.

#pragma once

#include <functional>
#include <vector>

#include "acd/tensor.hpp"

namespace acd {

Tensor noise_sample(const Tensor& z0, const Tensor& eps, double t);

// mean((v_pred - (z0 - eps))^2)
Tensor cfm_loss(const Tensor& v_pred, const Tensor& z0, const Tensor& eps);

struct SamplerConfig {
    std::size_t steps = 50;
    double cfg_scale = 6.0;

    void validate() const;
    // steps + 1 uniform times from 1 down to 0.
    std::vector<double> schedule() const;
};

// v_uncond + w * (v_cond - v_uncond); w == 1 returns v_cond and w == 0
// returns v_uncond exactly.
Tensor cfg_combine(const Tensor& v_uncond, const Tensor& v_cond, double w);

// Velocity at state z and time t, with or without the real conditioning.
using VelocityFn = std::function<Tensor(const Tensor& z, double t, bool conditional)>;

// Integrates from an explicit start state at t = 1.
Tensor integrate(const VelocityFn& velocity, Tensor z, const SamplerConfig& cfg);

// Draws the t = 1 state from a seeded standard normal, then integrates.
Tensor sample(const VelocityFn& velocity, const Shape& latent_shape, const SamplerConfig& cfg, std::uint64_t seed);

// Seeded standard normal tensor.
Tensor normal_tensor(const Shape& shape, std::uint64_t seed);

}  // namespace acd
