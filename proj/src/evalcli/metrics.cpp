// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <stdexcept>

#include "acd/evalcli.hpp"

namespace acd {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
    if (a.ndim() != 4 || a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": expected equal [T,H,W,C] shapes, got " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
    }
    for (const Tensor* t : {&a, &b}) {
        for (double v : t->values()) {
            if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(op) + ": values must lie in [0, 1]");
        }
    }
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
    check_pair(a, b, "psnr");
    const std::size_t frames = a.dim(0);
    const std::size_t per = a.numel() / frames;
    const auto x = a.values(), y = b.values();
    double total = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
        double se = 0.0;
        for (std::size_t k = f * per; k < (f + 1) * per; ++k) se += (x[k] - y[k]) * (x[k] - y[k]);
        const double mse = se / static_cast<double>(per);
        total += mse > 0.0 ? std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse)) : kPsnrCap;
    }
    return total / static_cast<double>(frames);
}

double ssim(const Tensor& a, const Tensor& b, std::size_t window) {
    check_pair(a, b, "ssim");
    const std::size_t T = a.dim(0), H = a.dim(1), W = a.dim(2), C = a.dim(3);
    if (window == 0 || H < window || W < window) {
        throw std::invalid_argument("ssim: frame " + std::to_string(H) + "x" + std::to_string(W) +
                                    " smaller than window " + std::to_string(window));
    }
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto x = a.values(), y = b.values();
    const double n = static_cast<double>(window * window);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i0 = 0; i0 + window <= H; i0 += window)
                for (std::size_t j0 = 0; j0 + window <= W; j0 += window) {
                    double mx = 0, my = 0;
                    for (std::size_t i = i0; i < i0 + window; ++i)
                        for (std::size_t j = j0; j < j0 + window; ++j) {
                            const std::size_t k = ((t * H + i) * W + j) * C + c;
                            mx += x[k];
                            my += y[k];
                        }
                    mx /= n;
                    my /= n;
                    double vx = 0, vy = 0, cov = 0;
                    for (std::size_t i = i0; i < i0 + window; ++i)
                        for (std::size_t j = j0; j < j0 + window; ++j) {
                            const std::size_t k = ((t * H + i) * W + j) * C + c;
                            vx += (x[k] - mx) * (x[k] - mx);
                            vy += (y[k] - my) * (y[k] - my);
                            cov += (x[k] - mx) * (y[k] - my);
                        }
                    vx /= n;
                    vy /= n;
                    cov /= n;
                    total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    ++count;
                }
    return total / static_cast<double>(count);
}

}  // namespace acd
