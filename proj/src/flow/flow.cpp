// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/flow.hpp"

#include <cmath>
#include <string>

#include "acd/ops.hpp"
#include "acd/rng.hpp"

namespace acd {

Tensor noise_sample(const Tensor& z0, const Tensor& eps, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::out_of_range("noise_sample: t=" + std::to_string(t) + " outside [0, 1]");
    }
    if (z0.shape() != eps.shape()) {
        throw ShapeError("noise_sample: z0 " + to_string(z0.shape()) + " vs eps " + to_string(eps.shape()));
    }
    if (t == 0.0) return z0;
    if (t == 1.0) return eps;
    return add(scale(z0, 1.0 - t), scale(eps, t));
}

Tensor cfm_loss(const Tensor& v_pred, const Tensor& z0, const Tensor& eps) {
    if (v_pred.shape() != z0.shape() || z0.shape() != eps.shape()) {
        throw ShapeError("cfm_loss: v " + to_string(v_pred.shape()) + ", z0 " + to_string(z0.shape()) + ", eps " +
                         to_string(eps.shape()));
    }
    return mse(v_pred, sub(z0, eps));
}

void SamplerConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("sampler: steps must be at least 1");
    if (!std::isfinite(cfg_scale)) throw std::invalid_argument("sampler: cfg_scale must be finite");
}

std::vector<double> SamplerConfig::schedule() const {
    validate();
    std::vector<double> ts(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) {
        ts[k] = 1.0 - static_cast<double>(k) / static_cast<double>(steps);
    }
    return ts;
}

Tensor cfg_combine(const Tensor& v_uncond, const Tensor& v_cond, double w) {
    if (w == 1.0) return v_cond;
    if (w == 0.0) return v_uncond;
    return add(v_uncond, scale(sub(v_cond, v_uncond), w));
}

Tensor integrate(const VelocityFn& velocity, Tensor z, const SamplerConfig& cfg) {
    const std::vector<double> ts = cfg.schedule();
    NoGradGuard no_grad;
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        Tensor v;
        try {
            Tensor v_cond = velocity(z, ts[k], true);
            v = cfg.cfg_scale == 1.0 ? v_cond : cfg_combine(velocity(z, ts[k], false), v_cond, cfg.cfg_scale);
            if (v.shape() != z.shape()) {
                throw ShapeError("sample: velocity " + to_string(v.shape()) + " vs state " + to_string(z.shape()));
            }
            z = add(z, scale(v, ts[k] - ts[k + 1])).detach();
        } catch (const NonFiniteError& e) {
            throw NonFiniteError("sample: non-finite state at step " + std::to_string(k) + " (t=" +
                                 std::to_string(ts[k]) + "): " + e.what());
        }
    }
    return z;
}

Tensor normal_tensor(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.normal();
    return Tensor(shape, std::move(v));
}

Tensor sample(const VelocityFn& velocity, const Shape& latent_shape, const SamplerConfig& cfg, std::uint64_t seed) {
    return integrate(velocity, normal_tensor(latent_shape, seed), cfg);
}

}  // namespace acd
