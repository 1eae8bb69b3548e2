// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/layout.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "acd/ops.hpp"

namespace acd {

namespace {

void check_video3(const Tensor& t, const char* what) {
    if (!t.defined() || t.ndim() != 3) {
        throw ShapeError(std::string("layout: ") + what + " must be [T,H,W]");
    }
}

void check_divisible(const Shape& s, std::size_t pt, std::size_t ps, const char* op) {
    if (pt == 0 || ps == 0 || s[0] % pt != 0 || s[1] % ps != 0 || s[2] % ps != 0) {
        throw ShapeError(std::string(op) + ": dims " + to_string(s) + " not divisible by patch (" +
                         std::to_string(pt) + "," + std::to_string(ps) + ")");
    }
}

// Pointwise linear over the last axis of a 4-D tensor.
Tensor pointwise(const Tensor& x, const Tensor& w, const Tensor& b) {
    const Shape s = x.shape();
    const std::size_t rows = s[0] * s[1] * s[2];
    Tensor y = add(matmul(reshape(x, {rows, s[3]}), w), b);
    return reshape(y, {s[0], s[1], s[2], w.dim(1)});
}

}  // namespace

void validate_signals(const ControlSignals& sig, std::size_t num_categories) {
    check_video3(sig.depth, "depth");
    check_video3(sig.sem, "semantic map");
    check_video3(sig.mask, "mask");
    if (sig.depth.shape() != sig.sem.shape() || sig.depth.shape() != sig.mask.shape()) {
        throw ShapeError("layout: depth " + to_string(sig.depth.shape()) + ", semantic " +
                         to_string(sig.sem.shape()) + " and mask " + to_string(sig.mask.shape()) +
                         " are not pixel-aligned");
    }
    auto d = sig.depth.values();
    auto s = sig.sem.values();
    auto m = sig.mask.values();
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] != 0.0 && m[i] != 1.0) {
            throw std::invalid_argument("layout: mask value " + std::to_string(m[i]) + " at " + std::to_string(i) +
                                        " is not binary");
        }
        if (s[i] < 0.0 || s[i] > static_cast<double>(num_categories) || s[i] != std::floor(s[i])) {
            throw std::invalid_argument("layout: semantic id " + std::to_string(s[i]) + " at " + std::to_string(i) +
                                        " outside 0.." + std::to_string(num_categories));
        }
        if ((m[i] == 1.0) != (s[i] != 0.0)) {
            throw std::invalid_argument("layout: mask and semantic map disagree at " + std::to_string(i));
        }
        if (d[i] < 0.0 || d[i] > 1.0) {
            throw std::invalid_argument("layout: depth " + std::to_string(d[i]) + " at " + std::to_string(i) +
                                        " outside [0, 1]");
        }
        if (d[i] > 0.0 && m[i] == 0.0) {
            throw std::invalid_argument("layout: positive depth outside the mask at " + std::to_string(i));
        }
    }
}

Tensor derive_mask(const ControlSignals& sig) {
    check_video3(sig.mask, "mask");
    for (double v : sig.mask.values()) {
        if (v != 0.0) return sig.mask;
    }
    throw std::invalid_argument("degenerate layout: no objects visible");
}

TargetMap target_map(const Tensor& mask, std::size_t pt, std::size_t ps) {
    check_video3(mask, "mask");
    check_divisible(mask.shape(), pt, ps, "target_map");
    NoGradGuard no_grad;
    Tensor pooled = avg_pool(mask.detach(), 0, pt);
    const std::array<std::size_t, 2> axes{1, 2};
    Tensor picked = nearest_downsample(pooled, axes, ps);
    Tensor raw = reshape(picked, {picked.numel()});
    double total = 0.0;
    for (double v : raw.values()) total += v;
    if (total <= 0.0) {
        throw std::invalid_argument("degenerate layout: no objects visible");
    }
    std::vector<double> norm(raw.values().begin(), raw.values().end());
    for (double& v : norm) v /= total;
    return {raw, Tensor(raw.shape(), std::move(norm))};
}

LayoutEncoder::LayoutEncoder(const LayoutConfig& cfg, ParamStore& store, std::uint64_t seed) : cfg_(cfg) {
    if (cfg_.dim == 0 || cfg_.lift_channels == 0 || cfg_.patch_t == 0 || cfg_.patch_s == 0) {
        throw std::invalid_argument("layout: dim, lift_channels and patch sizes must be positive");
    }
    Rng rng(derive_seed(seed, 3));
    depth_ = make_branch(store, "depth", false, rng);
    semantic_ = make_branch(store, "semantic", true, rng);
}

LayoutEncoder::Branch LayoutEncoder::make_branch(ParamStore& store, const std::string& name, bool semantic,
                                                 Rng& rng) const {
    const std::size_t c = cfg_.lift_channels;
    const double mix_std = 1.0 / std::sqrt(static_cast<double>(c));
    Branch b;
    if (semantic) {
        b.lift_w = store.add(Partition::layout_enc, name + ".lift.table",
                             init_normal(rng, {cfg_.num_categories + 1, c}, 1.0));
        auto row0 = b.lift_w.mutable_values();
        for (std::size_t j = 0; j < c; ++j) row0[j] = 0.0;
    } else {
        b.lift_w = store.add(Partition::layout_enc, name + ".lift.w", init_normal(rng, {1, c}, 1.0));
        b.lift_b = store.add(Partition::layout_enc, name + ".lift.b", init_zeros({c}));
    }
    b.mix1_w = store.add(Partition::layout_enc, name + ".mix1.w", init_normal(rng, {c, c}, mix_std));
    b.mix1_b = store.add(Partition::layout_enc, name + ".mix1.b", init_zeros({c}));
    b.mix2_w = store.add(Partition::layout_enc, name + ".mix2.w", init_normal(rng, {c, c}, mix_std));
    b.mix2_b = store.add(Partition::layout_enc, name + ".mix2.b", init_zeros({c}));
    b.out_w = store.add(Partition::layout_enc, name + ".out.w", init_normal(rng, {c, cfg_.dim}, mix_std));
    b.out_b = store.add(Partition::layout_enc, name + ".out.b", init_zeros({cfg_.dim}));
    return b;
}

void LayoutEncoder::set_enabled(bool depth, bool semantic) {
    cfg_.use_depth = depth;
    cfg_.use_semantic = semantic;
}

Tensor LayoutEncoder::run_stack(const Branch& b, Tensor x) const {
    x = avg_pool(x, 0, cfg_.patch_t);
    x = silu(pointwise(x, b.mix1_w, b.mix1_b));
    x = avg_pool(avg_pool(x, 1, cfg_.patch_s), 2, cfg_.patch_s);
    x = silu(pointwise(x, b.mix2_w, b.mix2_b));
    const Shape s = x.shape();
    return add(matmul(reshape(x, {s[0] * s[1] * s[2], s[3]}), b.out_w), b.out_b);
}

Tensor LayoutEncoder::encode_depth(const Tensor& depth) const {
    const Shape s = depth.shape();
    Tensor x = reshape(depth, {s[0], s[1], s[2], 1});
    return run_stack(depth_, pointwise(x, depth_.lift_w, depth_.lift_b));
}

Tensor LayoutEncoder::encode_semantic(const Tensor& sem) const {
    std::vector<int> ids;
    ids.reserve(sem.numel());
    for (double v : sem.values()) {
        if (v < 0.0 || v > static_cast<double>(cfg_.num_categories) || v != std::floor(v)) {
            throw std::invalid_argument("layout: semantic id " + std::to_string(v) + " outside 0.." +
                                        std::to_string(cfg_.num_categories));
        }
        ids.push_back(static_cast<int>(v));
    }
    return run_stack(semantic_, embedding(semantic_.lift_w, ids, sem.shape(), 0));
}

Tensor LayoutEncoder::encode(const ControlSignals& sig) const {
    if (!cfg_.use_depth && !cfg_.use_semantic) {
        throw std::invalid_argument("no control signal enabled");
    }
    Tensor out;
    if (cfg_.use_depth) {
        check_video3(sig.depth, "depth");
        check_divisible(sig.depth.shape(), cfg_.patch_t, cfg_.patch_s, "encode_layout");
        out = encode_depth(sig.depth);
    }
    if (cfg_.use_semantic) {
        check_video3(sig.sem, "semantic map");
        check_divisible(sig.sem.shape(), cfg_.patch_t, cfg_.patch_s, "encode_layout");
        Tensor s = encode_semantic(sig.sem);
        out = out.defined() ? add(out, s) : s;
    }
    return out;
}

}  // namespace acd
