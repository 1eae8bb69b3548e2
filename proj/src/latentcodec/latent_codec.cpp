// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/latent_codec.hpp"

#include <string>

namespace acd {

Shape latent_shape(const Shape& v, const CodecConfig& cfg) {
    if (v.size() != 4) {
        throw ShapeError("encode: expected video [T,H,W,C], got " + to_string(v));
    }
    if (cfg.patch_t == 0 || cfg.patch_s == 0) {
        throw ShapeError("encode: patch factors must be positive");
    }
    if (v[0] % cfg.patch_t || v[1] % cfg.patch_s || v[2] % cfg.patch_s) {
        throw ShapeError("encode: video " + to_string(v) + " requires T divisible by " +
                         std::to_string(cfg.patch_t) + " and H, W divisible by " + std::to_string(cfg.patch_s));
    }
    return {v[0] / cfg.patch_t, v[1] / cfg.patch_s, v[2] / cfg.patch_s,
            v[3] * cfg.patch_t * cfg.patch_s * cfg.patch_s};
}

Shape video_shape(const Shape& z, std::size_t channels, const CodecConfig& cfg) {
    const std::size_t group = cfg.patch_t * cfg.patch_s * cfg.patch_s;
    if (z.size() != 4 || channels == 0 || group == 0 || z[3] != channels * group) {
        throw ShapeError("decode: latent " + to_string(z) + " is not producible from a " +
                         std::to_string(channels) + "-channel video with pt=" + std::to_string(cfg.patch_t) +
                         ", ps=" + std::to_string(cfg.patch_s));
    }
    return {z[0] * cfg.patch_t, z[1] * cfg.patch_s, z[2] * cfg.patch_s, channels};
}

namespace {

// Calls fn(video_index, latent_index) for every element.
template <typename Fn>
void for_each_pair(const Shape& v, const CodecConfig& cfg, Fn&& fn) {
    const std::size_t T = v[0], H = v[1], W = v[2], C = v[3];
    const std::size_t pt = cfg.patch_t, ps = cfg.patch_s;
    const std::size_t h = H / ps, w = W / ps;
    const std::size_t lc = C * pt * ps * ps;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < C; ++c) {
                    std::size_t vi = ((t * H + y) * W + x) * C + c;
                    std::size_t ch = (((t % pt) * ps + y % ps) * ps + x % ps) * C + c;
                    std::size_t li = (((t / pt) * h + y / ps) * w + x / ps) * lc + ch;
                    fn(vi, li);
                }
    (void)T;
}

}  // namespace

Tensor encode_video(const Tensor& video, const CodecConfig& cfg) {
    Shape zs = latent_shape(video.shape(), cfg);
    auto src = video.values();
    std::vector<double> out(src.size());
    for_each_pair(video.shape(), cfg, [&](std::size_t vi, std::size_t li) { out[li] = src[vi]; });
    return Tensor(std::move(zs), std::move(out));
}

Tensor decode_latent(const Tensor& latent, std::size_t channels, const CodecConfig& cfg) {
    Shape vs = video_shape(latent.shape(), channels, cfg);
    auto src = latent.values();
    std::vector<double> out(src.size());
    for_each_pair(vs, cfg, [&](std::size_t vi, std::size_t li) { out[vi] = src[li]; });
    return Tensor(std::move(vs), std::move(out));
}

}  // namespace acd
