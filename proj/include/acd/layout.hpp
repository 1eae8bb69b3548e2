// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sparse layout control signals, the two layout encoders, and the token-level
// target map derived from the object mask.

#pragma once

#include <cstdint>
#include <string>

#include "acd/params.hpp"
#include "acd/tensor.hpp"

namespace acd {

// Per-pixel control signals, each [T, H, W].
struct ControlSignals {
    Tensor depth;  // 0 = no object, else depth / scene max in (0, 1]
    Tensor sem;    // category id stored as a double, 0 = background
    Tensor mask;   // 1 where sem != 0
};

// Checks shapes, binary mask, mask == (sem != 0) and depth > 0 => mask.
void validate_signals(const ControlSignals& sig, std::size_t num_categories);

// Returns sig.mask; throws "degenerate layout: no objects visible" if empty.
Tensor derive_mask(const ControlSignals& sig);

struct TargetMap {
    Tensor raw;         // [N], values in [0, 1]
    Tensor normalized;  // [N], sums to 1
};

// Temporal average pool by pt, then top-left nearest sampling by ps,
// flattened time-major then row-major like patchify.
TargetMap target_map(const Tensor& mask, std::size_t pt, std::size_t ps);

struct LayoutConfig {
    std::size_t dim = 32;            // output token width, equal to the DiT width
    std::size_t lift_channels = 8;   // channel count inside the encoders
    std::size_t num_categories = 5;  // semantic ids 1..num_categories
    std::size_t patch_t = 2;
    std::size_t patch_s = 2;
    bool use_depth = true;
    bool use_semantic = true;
};

// Two encoders with separate parameters: lift, temporal pool + channel mix +
// silu, spatial pool + channel mix + silu, then a per-cell linear map to d.
// Output is the sum of the enabled branches.
class LayoutEncoder {
public:
    LayoutEncoder(const LayoutConfig& cfg, ParamStore& store, std::uint64_t seed);

    const LayoutConfig& config() const { return cfg_; }
    void set_enabled(bool depth, bool semantic);

    // [N, d] with N = (T/pt)(H/ps)(W/ps).
    Tensor encode(const ControlSignals& sig) const;

private:
    struct Branch {
        Tensor lift_w, lift_b;  // depth: [1, c] + [c]; semantic: embedding table [K+1, c]
        Tensor mix1_w, mix1_b;
        Tensor mix2_w, mix2_b;
        Tensor out_w, out_b;
    };
    Branch make_branch(ParamStore& store, const std::string& name, bool semantic, Rng& rng) const;
    Tensor run_stack(const Branch& b, Tensor x) const;
    Tensor encode_depth(const Tensor& depth) const;
    Tensor encode_semantic(const Tensor& sem) const;

    LayoutConfig cfg_;
    Branch depth_, semantic_;
};

}  // namespace acd
