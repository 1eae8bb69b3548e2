// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Invertible space-time-to-depth codec between pixel videos [T,H,W,C] and
// latent videos [T/pt, H/ps, W/ps, C*pt*ps*ps]. Latent channel index is
// ((dt*ps + dy)*ps + dx)*C + c.

#pragma once

#include "acd/tensor.hpp"

namespace acd {

struct CodecConfig {
    std::size_t patch_t = 2;
    std::size_t patch_s = 2;
};

Shape latent_shape(const Shape& video_shape, const CodecConfig& cfg);
Shape video_shape(const Shape& latent_shape, std::size_t channels, const CodecConfig& cfg);

// Pure rearrangement; the result is a constant (no graph edge).
Tensor encode_video(const Tensor& video, const CodecConfig& cfg = {});
Tensor decode_latent(const Tensor& latent, std::size_t channels, const CodecConfig& cfg = {});

}  // namespace acd
