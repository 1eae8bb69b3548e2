// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/dit.hpp"

#include <cmath>
#include <string>

#include "acd/ops.hpp"

namespace acd {

void DiTConfig::validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0) {
        throw std::invalid_argument("dit: dim " + std::to_string(dim) + " must be divisible by heads " +
                                    std::to_string(heads));
    }
    if (dim % 2 != 0 || dim < 6) {
        throw std::invalid_argument("dit: dim must be even and at least 6 for the 3-axis position encoding");
    }
    if (layers == 0 || ffn_mult == 0 || max_tokens == 0 || latent_channels == 0) {
        throw std::invalid_argument("dit: layers, ffn_mult, max_tokens and latent_channels must be positive");
    }
    if (lora_rank > 0 && !(lora_alpha > 0.0)) {
        throw std::invalid_argument("dit: lora_alpha must be positive when LoRA is enabled");
    }
}

Tensor apply_linear(const Linear& l, const Tensor& x) { return add(matmul(x, l.w), l.b); }

Tensor cond_activation(const Tensor& cond) { return reshape(silu(cond), {1, cond.numel()}); }

namespace {

void sinusoid(double pos, std::size_t width, double* out) {
    for (std::size_t i = 0; i < width / 2; ++i) {
        double omega = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(width));
        out[2 * i] = std::sin(pos * omega);
        out[2 * i + 1] = std::cos(pos * omega);
    }
}

Linear make_linear(ParamStore& store, Partition part, const std::string& name, std::size_t in, std::size_t out,
                   double stddev, Rng& rng) {
    Linear l;
    l.w = store.add(part, name + ".w",
                    stddev > 0.0 ? init_normal(rng, {in, out}, stddev) : init_zeros({in, out}));
    l.b = store.add(part, name + ".b", init_zeros({out}));
    return l;
}

Tensor project(const Tensor& x, const BlockParams& p, Proj which, double lora_scale, bool use_lora) {
    const auto idx = static_cast<std::size_t>(which);
    Tensor y = matmul(x, p.w[idx]);
    if (use_lora && p.has_lora()) {
        const LoraPair& l = p.lora[idx];
        y = add(y, scale(matmul(matmul(x, l.a), l.b), lora_scale));
    }
    return y;
}

}  // namespace

Tensor position_encoding(const TokenGrid& grid, std::size_t dim) {
    const std::size_t ds = 2 * (dim / 6);
    const std::size_t dt = dim - 2 * ds;
    std::vector<double> pe(grid.count() * dim);
    std::size_t n = 0;
    for (std::size_t t = 0; t < grid.t; ++t)
        for (std::size_t y = 0; y < grid.h; ++y)
            for (std::size_t x = 0; x < grid.w; ++x, ++n) {
                double* row = pe.data() + n * dim;
                sinusoid(static_cast<double>(t), dt, row);
                sinusoid(static_cast<double>(y), ds, row + dt);
                sinusoid(static_cast<double>(x), ds, row + dt + ds);
            }
    return Tensor(Shape{grid.count(), dim}, std::move(pe));
}

BlockParams make_block(ParamStore& store, Partition part, const std::string& prefix, const DiTConfig& cfg,
                       Rng& rng) {
    const std::size_t d = cfg.dim;
    const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
    BlockParams p;
    const char* names[4] = {"wq", "wk", "wv", "wo"};
    for (std::size_t i = 0; i < 4; ++i) {
        p.w[i] = store.add(part, prefix + "." + names[i], init_normal(rng, {d, d}, wstd));
    }
    // Shift/scale columns are small random; both gate column ranges are zero.
    Tensor mod_w = init_normal(rng, {d, 6 * d}, 0.02);
    auto mv = mod_w.mutable_values();
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            mv[r * 6 * d + 2 * d + c] = 0.0;
            mv[r * 6 * d + 5 * d + c] = 0.0;
        }
    }
    p.mod.w = store.add(part, prefix + ".mod.w", mod_w);
    p.mod.b = store.add(part, prefix + ".mod.b", init_zeros({6 * d}));
    const std::size_t hidden = cfg.ffn_mult * d;
    p.ffn_in = make_linear(store, part, prefix + ".ffn_in", d, hidden, wstd, rng);
    p.ffn_out = make_linear(store, part, prefix + ".ffn_out", hidden, d,
                            1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    return p;
}

Tensor attention(const Tensor& tokens, const BlockParams& p, const DiTConfig& cfg, bool use_lora,
                 AttentionCapture* capture) {
    if (tokens.ndim() != 2 || tokens.dim(1) != cfg.dim) {
        throw ShapeError("attention: tokens " + to_string(tokens.shape()) + " vs model width " +
                         std::to_string(cfg.dim));
    }
    const double ls = cfg.lora_scale();
    Tensor q = project(tokens, p, Proj::q, ls, use_lora);
    Tensor k = project(tokens, p, Proj::k, ls, use_lora);
    Tensor v = project(tokens, p, Proj::v, ls, use_lora);
    if (capture) {
        capture->q = q;
        capture->k = k;
    }
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.dim / cfg.heads));
    std::vector<Tensor> qh = split(q, cfg.heads, 1);
    std::vector<Tensor> kh = split(k, cfg.heads, 1);
    std::vector<Tensor> vh = split(v, cfg.heads, 1);
    std::vector<Tensor> heads;
    heads.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        Tensor probs = softmax(scale(matmul(qh[h], transpose(kh[h])), inv_sqrt), 1);
        if (capture && capture->want_probs) capture->probs.push_back(probs);
        heads.push_back(matmul(probs, vh[h]));
    }
    Tensor merged = cfg.heads == 1 ? heads[0] : concat(heads, 1);
    return project(merged, p, Proj::o, ls, use_lora);
}

Tensor block_forward(const BlockParams& p, const DiTConfig& cfg, const Tensor& x, const Tensor& cond_act,
                     bool use_lora, AttentionCapture* capture) {
    const std::size_t d = cfg.dim;
    Tensor mod = reshape(apply_linear(p.mod, cond_act), {6 * d});
    std::vector<Tensor> m = split(mod, 6, 0);
    Tensor h = add(mul(layer_norm(x, 1), add_scalar(m[1], 1.0)), m[0]);
    Tensor x1 = add(x, mul(attention(h, p, cfg, use_lora, capture), m[2]));
    Tensor h2 = add(mul(layer_norm(x1, 1), add_scalar(m[4], 1.0)), m[3]);
    Tensor f = apply_linear(p.ffn_out, gelu(apply_linear(p.ffn_in, h2)));
    return add(x1, mul(f, m[5]));
}

DiT::DiT(const DiTConfig& cfg, ParamStore& store, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg_.dim;
    const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
    Rng rng(derive_seed(seed, 1));
    for (std::size_t i = 0; i < cfg_.layers; ++i) {
        blocks_.push_back(make_block(store, Partition::frozen_base, "blocks." + std::to_string(i), cfg_, rng));
    }
    patch_embed_ = make_linear(store, Partition::heads, "patch_embed", cfg_.latent_channels, d,
                               1.0 / std::sqrt(static_cast<double>(cfg_.latent_channels)), rng);
    t_mlp1_ = make_linear(store, Partition::heads, "t_mlp1", d, d, wstd, rng);
    t_mlp2_ = make_linear(store, Partition::heads, "t_mlp2", d, d, wstd, rng);
    context_table_ = store.add(Partition::heads, "context", init_normal(rng, {cfg_.num_classes + 1, d}, 0.3));
    final_mod_ = make_linear(store, Partition::heads, "final_mod", d, 2 * d, 0.02, rng);
    out_head_ = make_linear(store, Partition::heads, "out_head", d, cfg_.latent_channels, 0.0, rng);

    // Separate stream so that enabling LoRA leaves every base weight unchanged.
    Rng lora_rng(derive_seed(seed, 2));
    if (cfg_.lora_rank > 0) {
        const char* names[4] = {"q", "k", "v", "o"};
        for (std::size_t i = 0; i < cfg_.layers; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                std::string base = "blocks." + std::to_string(i) + "." + names[j];
                LoraPair& l = blocks_[i].lora[j];
                l.a = store.add(Partition::lora, base + ".a", init_normal(lora_rng, {d, cfg_.lora_rank}, wstd));
                l.b = store.add(Partition::lora, base + ".b", init_zeros({cfg_.lora_rank, d}));
            }
        }
    }
}

Tensor DiT::patchify(const Tensor& latent, TokenGrid* grid_out) const {
    const Shape& s = latent.shape();
    if (s.size() != 4 || s[3] != cfg_.latent_channels) {
        throw ShapeError("patchify: latent " + to_string(s) + " does not have " +
                         std::to_string(cfg_.latent_channels) + " channels");
    }
    TokenGrid grid{s[0], s[1], s[2]};
    if (grid.count() > cfg_.max_tokens) {
        throw ShapeError("patchify: " + std::to_string(grid.count()) + " tokens exceed max_tokens " +
                         std::to_string(cfg_.max_tokens));
    }
    if (grid_out) *grid_out = grid;
    Tensor flat = reshape(latent, {grid.count(), cfg_.latent_channels});
    return add(apply_linear(patch_embed_, flat), position_encoding(grid, cfg_.dim));
}

Tensor DiT::unpatchify(const Tensor& tokens, const TokenGrid& grid) const {
    if (tokens.ndim() != 2 || tokens.dim(0) != grid.count() || tokens.dim(1) != cfg_.dim) {
        throw ShapeError("unpatchify: tokens " + to_string(tokens.shape()) + " do not match grid " +
                         to_string({grid.t, grid.h, grid.w}) + " at width " + std::to_string(cfg_.dim));
    }
    return reshape(apply_linear(out_head_, tokens), {grid.t, grid.h, grid.w, cfg_.latent_channels});
}

Tensor DiT::timestep_embed(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::out_of_range("timestep_embed: t=" + std::to_string(t) + " outside [0, 1]");
    }
    const std::size_t d = cfg_.dim;
    const std::size_t half = d / 2;
    std::vector<double> freq(d);
    for (std::size_t i = 0; i < half; ++i) {
        double f = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        freq[i] = std::cos(1000.0 * t * f);
        freq[half + i] = std::sin(1000.0 * t * f);
    }
    Tensor base(Shape{1, d}, std::move(freq));
    Tensor h = apply_linear(t_mlp2_, silu(apply_linear(t_mlp1_, base)));
    return reshape(h, {d});
}

Tensor DiT::context_embed(int cls) const {
    if (cls < 0 || static_cast<std::size_t>(cls) > cfg_.num_classes) {
        throw std::out_of_range("context_embed: class " + std::to_string(cls) + " outside 0.." +
                                std::to_string(cfg_.num_classes));
    }
    std::vector<int> id{cls};
    return embedding(context_table_, id, Shape{}, std::nullopt);
}

Tensor DiT::condition(double t, int cls) const { return add(timestep_embed(t), context_embed(cls)); }

ForwardResult DiT::forward(const Tensor& tokens, const Tensor& cond, const ForwardOptions& opts) const {
    if (opts.residuals.size() > blocks_.size()) {
        throw std::invalid_argument("dit: more residuals than blocks");
    }
    ForwardResult r;
    r.trace.role = opts.capture;
    Tensor cond_act = cond_activation(cond);
    Tensor x = tokens;
    const bool want_capture = opts.capture != CaptureRole::none || opts.record_attention;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        AttentionCapture cap;
        cap.want_probs = opts.record_attention;
        x = block_forward(blocks_[i], cfg_, x, cond_act, opts.use_lora, want_capture ? &cap : nullptr);
        if (opts.capture == CaptureRole::query_stream) r.trace.projections.push_back(cap.q);
        if (opts.capture == CaptureRole::key_stream) r.trace.projections.push_back(cap.k);
        if (opts.record_attention) r.trace.attention.push_back(std::move(cap.probs));
        if (i < opts.residuals.size() && opts.residuals[i].defined()) x = add(x, opts.residuals[i]);
    }
    r.hidden = x;
    return r;
}

Tensor DiT::output(const Tensor& hidden, const Tensor& cond, const TokenGrid& grid) const {
    const std::size_t d = cfg_.dim;
    Tensor mod = reshape(apply_linear(final_mod_, cond_activation(cond)), {2 * d});
    std::vector<Tensor> m = split(mod, 2, 0);
    Tensor h = add(mul(layer_norm(hidden, 1), add_scalar(m[1], 1.0)), m[0]);
    return unpatchify(h, grid);
}

}  // namespace acd
