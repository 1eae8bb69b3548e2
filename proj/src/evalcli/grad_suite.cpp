// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include <functional>
#include <stdexcept>

#include "acd/evalcli.hpp"
#include "acd/grad_check.hpp"
#include "acd/ops.hpp"

namespace acd {

namespace {

constexpr double kStep = 1e-5;

Tensor uniform_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.mutable_values()) v = lo + (hi - lo) * rng.uniform();
    return t;
}

// Weighted sum so every output coordinate carries a distinct gradient.
Tensor probe(const Tensor& y, std::uint64_t seed) {
    Rng rng(seed);
    return sum_all(mul(y, uniform_tensor(rng, y.shape())));
}

class Suite {
public:
    Suite(std::string module, std::vector<GradCheckLine>& out, std::uint64_t seed)
        : module_(std::move(module)), out_(out), rng_(seed) {}

    Rng& rng() { return rng_; }

    void op(const char* name, const std::function<Tensor(const Tensor&)>& fn, Shape shape) {
        Tensor x = uniform_tensor(rng_, std::move(shape));
        const std::uint64_t ps = rng_.next();
        auto r = grad_check([&](const Tensor& t) { return probe(fn(t), ps); }, x, kStep);
        out_.push_back({module_, name, r.max_rel_error});
    }

    void loss(const char* name, const std::function<Tensor()>& fn, std::vector<Tensor> params) {
        auto r = grad_check(fn, params, kStep);
        out_.push_back({module_, name, r.max_rel_error});
    }

private:
    std::string module_;
    std::vector<GradCheckLine>& out_;
    Rng rng_;
};

void tensorcore_checks(Suite& s) {
    Rng& rng = s.rng();
    Tensor other = uniform_tensor(rng, {3, 4});
    Tensor row = uniform_tensor(rng, {4});
    Tensor rhs = uniform_tensor(rng, {4, 2});
    s.op("add", [&](const Tensor& t) { return add(t, other); }, {3, 4});
    s.op("add_broadcast", [&](const Tensor& t) { return add(other, t); }, {4});
    s.op("sub", [&](const Tensor& t) { return sub(other, t); }, {3, 4});
    s.op("mul", [&](const Tensor& t) { return mul(t, t); }, {3, 4});
    s.op("mul_broadcast", [&](const Tensor& t) { return mul(other, t); }, {3, 1});
    s.op("scale", [&](const Tensor& t) { return scale(t, -1.7); }, {3, 4});
    s.op("add_scalar", [&](const Tensor& t) { return add_scalar(t, 0.3); }, {3, 4});
    s.op("matmul_lhs", [&](const Tensor& t) { return matmul(t, rhs); }, {3, 4});
    s.op("matmul_rhs", [&](const Tensor& t) { return matmul(other, t); }, {4, 2});
    s.op("transpose", [&](const Tensor& t) { return transpose(t); }, {3, 4});
    s.op("reshape", [&](const Tensor& t) { return reshape(t, {2, 6}); }, {3, 4});
    s.op("concat", [&](const Tensor& t) {
        std::vector<Tensor> parts{t, other, t};
        return concat(parts, 1);
    }, {3, 2});
    s.op("split", [&](const Tensor& t) {
        auto p = split(t, 2, 1);
        return sub(mul(p[0], p[0]), p[1]);
    }, {3, 4});
    s.op("softmax", [&](const Tensor& t) { return softmax(t, 1); }, {3, 4});
    s.op("softmax_axis0", [&](const Tensor& t) { return softmax(t, 0); }, {3, 4});
    s.op("sum", [&](const Tensor& t) { return sum(t, 1); }, {2, 3, 4});
    s.op("mean", [&](const Tensor& t) { return mean(t, 0); }, {2, 3, 4});
    s.op("sum_all", [&](const Tensor& t) { return sum_all(mul(t, t)); }, {3, 4});
    s.op("mean_all", [&](const Tensor& t) { return mean_all(mul(t, t)); }, {3, 4});
    s.op("mse", [&](const Tensor& t) { return mse(t, other); }, {3, 4});
    s.op("layer_norm", [&](const Tensor& t) { return layer_norm(t, 1); }, {3, 4});
    s.op("layer_norm_gain", [&](const Tensor& t) { return layer_norm(other, 1, t, row); }, {4});
    s.op("layer_norm_bias", [&](const Tensor& t) { return layer_norm(other, 1, row, t); }, {4});
    s.op("gelu", [&](const Tensor& t) { return gelu(scale(t, 3.0)); }, {3, 4});
    s.op("silu", [&](const Tensor& t) { return silu(scale(t, 3.0)); }, {3, 4});
    s.op("embedding", [&](const Tensor& t) {
        std::vector<int> ids{2, 0, 1, 2, 3};
        return embedding(t, ids, Shape{5}, 3);
    }, {4, 3});
    s.op("avg_pool", [&](const Tensor& t) { return avg_pool(t, 1, 2); }, {2, 4, 3});
    s.op("nearest_downsample", [&](const Tensor& t) {
        const std::size_t axes[] = {1, 2};
        return nearest_downsample(t, axes, 2);
    }, {2, 4, 4});
}

// One block, d = 8, on a 2x4x4 clip: four tokens.
ModelConfig toy_model() {
    ModelConfig m;
    m.frames = 2;
    m.height = 4;
    m.width = 4;
    m.dit.dim = 8;
    m.dit.heads = 2;
    m.dit.layers = 1;
    m.dit.ffn_mult = 2;
    m.dit.max_tokens = 4;
    m.dit.lora_rank = 2;
    m.dit.lora_alpha = 4.0;
    m.layout.dim = 8;
    m.layout.lift_channels = 4;
    m.ctrl_blocks = 1;
    return m;
}

VideoSample toy_sample(Rng& rng) {
    VideoSample s;
    s.rgb = uniform_tensor(rng, {2, 4, 4, 3}, 0.0, 1.0);
    Tensor mask(Shape{2, 4, 4}), sem(Shape{2, 4, 4}), depth(Shape{2, 4, 4});
    for (std::size_t k = 0; k < 32; ++k) {
        const std::size_t i = (k / 4) % 4, j = k % 4;
        if (i < 3 && j < 3) {
            mask.mutable_values()[k] = 1.0;
            sem.mutable_values()[k] = static_cast<double>(1 + rng.uniform_int(0, 4));
            depth.mutable_values()[k] = 0.2 + 0.8 * rng.uniform();
        }
    }
    s.signals = {depth, sem, mask};
    s.prompt_class = 3;
    return s;
}

std::vector<Tensor> params_of(AcdModel& m, const std::function<bool(Partition)>& pick) {
    std::vector<Tensor> out;
    for (auto& e : m.store().entries())
        if (pick(e.partition)) out.push_back(e.tensor);
    return out;
}

void model_checks(const std::string& module, Suite& s) {
    AcdModel model(toy_model(), s.rng().next());
    // Open the zero-initialized gates, LoRA factors and projections.
    for (auto& e : model.store().entries())
        for (double& v : e.tensor.mutable_values()) v += 0.1 * s.rng().normal();
    const VideoSample smp = toy_sample(s.rng());
    const ModelConfig& mc = model.config();
    const double t = 0.35;
    const Tensor z0 = encode_video(smp.rgb, mc.codec);
    const Tensor eps = normal_tensor(z0.shape(), s.rng().next());
    const Tensor zt = noise_sample(z0, eps, t);
    const std::uint64_t ps = s.rng().next();
    auto all = [](Partition) { return true; };

    if (module == "dit") {
        s.loss("dit_forward", [&] {
            return probe(model.run(zt, t, smp.prompt_class, Tensor(), CaptureRole::none, true, true).velocity, ps);
        }, params_of(model, [](Partition p) { return p != Partition::controlnet && p != Partition::layout_enc; }));
    } else if (module == "layout") {
        s.loss("layout_encode", [&] { return probe(model.layout().encode(smp.signals), ps); },
               params_of(model, [](Partition p) { return p == Partition::layout_enc; }));
    } else if (module == "controlnet") {
        const Tensor c = uniform_tensor(s.rng(), {4, 8});
        s.loss("controlnet_residuals", [&] {
            return probe(model.run(zt, t, smp.prompt_class, c, CaptureRole::none, true, true).velocity, ps);
        }, params_of(model, [](Partition p) { return p == Partition::controlnet; }));
    } else if (module == "acd") {
        s.loss("L_diff", [&] {
            Tensor c = model.layout().encode(smp.signals);
            return cfm_loss(model.run(zt, t, smp.prompt_class, c, CaptureRole::none, true, true).velocity, z0, eps);
        }, params_of(model, all));
        const Tensor mask = derive_mask(smp.signals);
        const Tensor target = target_map(mask, mc.codec.patch_t, mc.codec.patch_s).normalized;
        const Tensor zm = encode_video(apply_mask(smp.rgb, mask), mc.codec);
        s.loss("L_attn", [&] {
            Tensor c = model.layout().encode(smp.signals);
            auto k = model.run(zt, t, smp.prompt_class, c, CaptureRole::key_stream, true, false);
            auto q = model.run(zm, t, smp.prompt_class, c, CaptureRole::query_stream, true, false);
            return attention_loss(q.projections, k.projections, target, mc.dit.heads, mc.dit.layers);
        }, params_of(model, all));
    }
}

void flow_checks(Suite& s) {
    Rng& rng = s.rng();
    const Tensor z0 = uniform_tensor(rng, {1, 2, 2, 3});
    const Tensor eps = uniform_tensor(rng, {1, 2, 2, 3});
    s.op("noise_sample_z0", [&](const Tensor& x) { return noise_sample(x, eps, 0.3); }, {1, 2, 2, 3});
    s.op("noise_sample_eps", [&](const Tensor& x) { return noise_sample(z0, x, 0.3); }, {1, 2, 2, 3});
    s.op("cfm_loss", [&](const Tensor& v) { return cfm_loss(v, z0, eps); }, {1, 2, 2, 3});
    s.op("cfg_combine", [&](const Tensor& v) { return cfg_combine(z0, v, 6.0); }, {1, 2, 2, 3});
}

}  // namespace

std::vector<GradCheckLine> run_grad_checks(std::string_view module, std::uint64_t seed) {
    static const char* const kModules[] = {"tensorcore", "flow", "layout", "dit", "controlnet", "acd"};
    bool known = module == "all";
    for (const char* m : kModules) known = known || module == m;
    if (!known) throw std::invalid_argument("grad-check: unknown module '" + std::string(module) + "'");
    std::vector<GradCheckLine> out;
    for (std::size_t i = 0; i < std::size(kModules); ++i) {
        const std::string m = kModules[i];
        if (module != "all" && module != m) continue;
        Suite s(m, out, derive_seed(seed, 0x6C4Eull, i));
        if (m == "tensorcore") {
            tensorcore_checks(s);
        } else if (m == "flow") {
            flow_checks(s);
        } else {
            model_checks(m, s);
        }
    }
    return out;
}

}  // namespace acd
