// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Trainable copy of the first N_c DiT blocks. The branch sees z_tokens plus
// the layout tokens; block i's output goes through a zero-initialized d x d
// projection and is added to the base stream right after base block i.

#pragma once

#include <vector>

#include "acd/dit.hpp"

namespace acd {

class ControlNet {
public:
    // Registers ctrl.blocks.i.* (values copied from the base) and ctrl.proj.i.*.
    ControlNet(const DiT& base, std::size_t num_blocks, ParamStore& store);

    // Copies base block values into the branch; used after the base has been
    // loaded or pretrained.
    void copy_from(const DiT& base);

    std::size_t num_blocks() const { return blocks_.size(); }
    bool enabled() const { return enabled_; }
    void set_enabled(bool on) { enabled_ = on; }

    std::vector<BlockParams>& blocks() { return blocks_; }
    std::vector<Linear>& projections() { return proj_; }

    // One residual per branch block; empty when disabled.
    std::vector<Tensor> forward(const Tensor& z_tokens, const Tensor& c_layout, const Tensor& cond) const;

private:
    DiTConfig cfg_;
    std::vector<BlockParams> blocks_;
    std::vector<Linear> proj_;
    bool enabled_ = true;
};

}  // namespace acd
