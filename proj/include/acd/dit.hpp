// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Miniature diffusion transformer over latent-video tokens.
//
// Each block is adaLN -> multi-head attention -> gated residual -> adaLN ->
// FFN -> gated residual. The adaLN projection maps silu(cond) to
// (shift1, scale1, gate1, shift2, scale2, gate2); gate columns start at zero
// so a fresh block is an identity map. LoRA adapters, when the rank is
// nonzero, sit on W_q, W_k, W_v, W_o as W + (alpha/r) * A * B with B = 0 at
// init.

#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "acd/params.hpp"
#include "acd/tensor.hpp"

namespace acd {

struct DiTConfig {
    std::size_t dim = 32;
    std::size_t heads = 4;
    std::size_t layers = 4;
    std::size_t ffn_mult = 4;
    std::size_t max_tokens = 256;
    std::size_t lora_rank = 4;
    double lora_alpha = 8.0;
    std::size_t latent_channels = 24;
    std::size_t num_classes = 5;  // context rows: 0 = null, 1..num_classes

    void validate() const;
    double lora_scale() const { return lora_rank ? lora_alpha / static_cast<double>(lora_rank) : 0.0; }
};

struct Linear {
    Tensor w;  // [in, out]
    Tensor b;  // [out]
};

Tensor apply_linear(const Linear& l, const Tensor& x);

struct LoraPair {
    Tensor a;  // [d, r]
    Tensor b;  // [r, d]
};

enum class Proj : std::size_t { q = 0, k = 1, v = 2, o = 3 };

struct BlockParams {
    std::array<Tensor, 4> w;  // W_q, W_k, W_v, W_o, each [d, d]
    Linear mod;               // d -> 6d
    Linear ffn_in;            // d -> ffn_mult*d
    Linear ffn_out;           // ffn_mult*d -> d
    std::array<LoraPair, 4> lora;  // undefined tensors when rank is 0

    const Tensor& weight(Proj p) const { return w[static_cast<std::size_t>(p)]; }
    bool has_lora() const { return lora[0].a.defined(); }
};

enum class CaptureRole : std::uint8_t { none, query_stream, key_stream };

struct ForwardTrace {
    CaptureRole role = CaptureRole::none;
    std::vector<Tensor> projections;             // per layer, [N, d]
    std::vector<std::vector<Tensor>> attention;  // per layer, per head [N, N]; only when requested
};

struct AttentionCapture {
    Tensor q, k;
    std::vector<Tensor> probs;  // filled when want_probs
    bool want_probs = false;
};

// Token grid recorded by patchify: N = t*h*w, flattened time-major then row-major.
struct TokenGrid {
    std::size_t t = 0, h = 0, w = 0;
    std::size_t count() const { return t * h * w; }
};

// Fixed sinusoidal encoding over (t, h, w); [N, d].
Tensor position_encoding(const TokenGrid& grid, std::size_t dim);

// Attention sublayer on already-normalized tokens: projections, multi-head
// softmax attention with scale 1/sqrt(d/heads), output projection.
Tensor attention(const Tensor& tokens, const BlockParams& p, const DiTConfig& cfg, bool use_lora,
                 AttentionCapture* capture = nullptr);

// One full block; cond_act is silu(cond) shaped [1, d].
Tensor block_forward(const BlockParams& p, const DiTConfig& cfg, const Tensor& x, const Tensor& cond_act,
                     bool use_lora, AttentionCapture* capture = nullptr);

// Builds a block with seeded weights registered in `store` under `prefix`.
BlockParams make_block(ParamStore& store, Partition part, const std::string& prefix, const DiTConfig& cfg,
                       Rng& rng);

struct ForwardOptions {
    CaptureRole capture = CaptureRole::none;
    bool record_attention = false;
    bool use_lora = true;
    // Added to the stream right after block i, for i < residuals.size().
    std::span<const Tensor> residuals = {};
};

struct ForwardResult {
    Tensor hidden;  // [N, d]
    ForwardTrace trace;
};

class DiT {
public:
    // Registers every parameter in `store`: blocks under base., LoRA under
    // lora., embeddings and heads under heads.
    DiT(const DiTConfig& cfg, ParamStore& store, std::uint64_t seed);

    const DiTConfig& config() const { return cfg_; }
    const std::vector<BlockParams>& blocks() const { return blocks_; }
    std::vector<BlockParams>& blocks() { return blocks_; }

    Tensor patchify(const Tensor& latent, TokenGrid* grid = nullptr) const;
    Tensor unpatchify(const Tensor& tokens, const TokenGrid& grid) const;

    // Sinusoidal(1000 t) -> Linear -> silu -> Linear. t must lie in [0, 1].
    Tensor timestep_embed(double t) const;
    // Row `cls` of the context table; 0 is the learned null context.
    Tensor context_embed(int cls) const;
    // timestep_embed(t) + context_embed(cls), shape [d].
    Tensor condition(double t, int cls) const;

    ForwardResult forward(const Tensor& tokens, const Tensor& cond, const ForwardOptions& opts = {}) const;

    // Final adaLN + output head: hidden [N, d] -> latent [t, h, w, c].
    Tensor output(const Tensor& hidden, const Tensor& cond, const TokenGrid& grid) const;

    Linear& patch_embed() { return patch_embed_; }
    Linear& output_head() { return out_head_; }
    const Linear& patch_embed() const { return patch_embed_; }
    const Linear& output_head() const { return out_head_; }

private:
    DiTConfig cfg_;
    std::vector<BlockParams> blocks_;
    Linear patch_embed_;
    Linear t_mlp1_, t_mlp2_;
    Tensor context_table_;
    Linear final_mod_;
    Linear out_head_;
};

// silu(cond) reshaped to [1, d], the input of every adaLN projection.
Tensor cond_activation(const Tensor& cond);

}  // namespace acd
