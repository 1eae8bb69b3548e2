// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/controlnet.hpp"

#include <algorithm>
#include <string>

#include "acd/ops.hpp"

namespace acd {

namespace {

void copy_values(const Tensor& src, Tensor& dst) {
    auto s = src.values();
    auto d = dst.mutable_values();
    std::copy(s.begin(), s.end(), d.begin());
}

}  // namespace

ControlNet::ControlNet(const DiT& base, std::size_t num_blocks, ParamStore& store) : cfg_(base.config()) {
    if (num_blocks > cfg_.layers) {
        throw std::invalid_argument("controlnet: " + std::to_string(num_blocks) + " blocks requested but the base has " +
                                    std::to_string(cfg_.layers));
    }
    Rng unused(0);
    const std::size_t d = cfg_.dim;
    for (std::size_t i = 0; i < num_blocks; ++i) {
        const std::string idx = std::to_string(i);
        blocks_.push_back(make_block(store, Partition::controlnet, "blocks." + idx, cfg_, unused));
        Linear p;
        p.w = store.add(Partition::controlnet, "proj." + idx + ".w", init_zeros({d, d}));
        p.b = store.add(Partition::controlnet, "proj." + idx + ".b", init_zeros({d}));
        proj_.push_back(p);
    }
    copy_from(base);
}

void ControlNet::copy_from(const DiT& base) {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const BlockParams& src = base.blocks()[i];
        BlockParams& dst = blocks_[i];
        for (std::size_t j = 0; j < 4; ++j) copy_values(src.w[j], dst.w[j]);
        for (auto [s, t] : {std::pair{&src.mod, &dst.mod}, std::pair{&src.ffn_in, &dst.ffn_in},
                            std::pair{&src.ffn_out, &dst.ffn_out}}) {
            copy_values(s->w, t->w);
            copy_values(s->b, t->b);
        }
    }
}

std::vector<Tensor> ControlNet::forward(const Tensor& z_tokens, const Tensor& c_layout, const Tensor& cond) const {
    std::vector<Tensor> out;
    if (!enabled_) return out;
    if (z_tokens.shape() != c_layout.shape()) {
        throw ShapeError("controlnet: layout tokens " + to_string(c_layout.shape()) + " vs tokens " +
                         to_string(z_tokens.shape()));
    }
    Tensor cond_act = cond_activation(cond);
    Tensor x = add(z_tokens, c_layout);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        x = block_forward(blocks_[i], cfg_, x, cond_act, false);
        out.push_back(apply_linear(proj_[i], x));
    }
    return out;
}

}  // namespace acd
