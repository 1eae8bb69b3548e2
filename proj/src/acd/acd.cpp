// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/acd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "acd/acdt.hpp"
#include "acd/ops.hpp"

namespace acd {

namespace fs = std::filesystem;

Tensor cross_attention_map(const Tensor& q_mask, const Tensor& k, std::size_t heads) {
    if (q_mask.ndim() != 2 || q_mask.shape() != k.shape()) {
        throw ShapeError("cross_attention_map: queries " + to_string(q_mask.shape()) + " vs keys " +
                         to_string(k.shape()));
    }
    const std::size_t d = q_mask.dim(1);
    if (heads == 0 || d % heads != 0) {
        throw ShapeError("cross_attention_map: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    const double s = 1.0 / std::sqrt(static_cast<double>(d / heads));
    if (heads == 1) return softmax(scale(matmul(q_mask, transpose(k)), s), 1);
    std::vector<Tensor> qh = split(q_mask, heads, 1);
    std::vector<Tensor> kh = split(k, heads, 1);
    Tensor acc;
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor p = softmax(scale(matmul(qh[h], transpose(kh[h])), s), 1);
        acc = acc.defined() ? add(acc, p) : p;
    }
    return scale(acc, 1.0 / static_cast<double>(heads));
}

Tensor response_map(const Tensor& m) {
    if (m.ndim() != 2 || m.dim(0) != m.dim(1)) {
        throw ShapeError("response_map: expected a square map, got " + to_string(m.shape()));
    }
    return mean(m, 0);
}

Tensor attention_loss(std::span<const Tensor> queries, std::span<const Tensor> keys, const Tensor& target,
                      std::size_t heads, std::size_t expected_layers) {
    for (std::size_t i = 0; i < expected_layers; ++i) {
        if (i >= queries.size() || !queries[i].defined()) {
            throw std::invalid_argument("attention_loss: missing query trace for layer " + std::to_string(i));
        }
        if (i >= keys.size() || !keys[i].defined()) {
            throw std::invalid_argument("attention_loss: missing key trace for layer " + std::to_string(i));
        }
    }
    if (expected_layers == 0) throw std::invalid_argument("attention_loss: no layers");
    const std::size_t n = queries[0].dim(0);
    if (target.ndim() != 1 || target.dim(0) != n) {
        throw ShapeError("attention_loss: target " + to_string(target.shape()) + " vs " + std::to_string(n) +
                         " tokens");
    }
    Tensor acc;
    for (std::size_t i = 0; i < expected_layers; ++i) {
        Tensor r = response_map(cross_attention_map(queries[i], keys[i], heads));
        Tensor d = sub(r, target);
        Tensor sq = sum_all(mul(d, d));
        acc = acc.defined() ? add(acc, sq) : sq;
    }
    return scale(acc, 1.0 / static_cast<double>(expected_layers * n));
}

void ModelConfig::validate() const {
    dit.validate();
    auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
    if (layout.dim != dit.dim) fail("layout width must equal the DiT width");
    if (layout.patch_t != codec.patch_t || layout.patch_s != codec.patch_s) {
        fail("layout pooling factors must equal the latent patch sizes");
    }
    if (dit.latent_channels != codec.patch_t * codec.patch_s * codec.patch_s * channels) {
        fail("latent_channels must be patch_t * patch_s^2 * channels = " +
             std::to_string(codec.patch_t * codec.patch_s * codec.patch_s * channels));
    }
    if (frames % codec.patch_t || height % codec.patch_s || width % codec.patch_s) {
        fail("video dims not divisible by the patch sizes");
    }
    std::size_t tokens = (frames / codec.patch_t) * (height / codec.patch_s) * (width / codec.patch_s);
    if (tokens > dit.max_tokens) {
        fail(std::to_string(tokens) + " tokens exceed max_tokens " + std::to_string(dit.max_tokens));
    }
    if (ctrl_blocks > dit.layers) fail("ctrl_blocks exceeds layers");
    if (dit.num_classes < layout.num_categories) fail("num_classes must cover every category");
}

namespace {

const ModelConfig& checked(const ModelConfig& c) {
    c.validate();
    return c;
}

}  // namespace

AcdModel::AcdModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(checked(cfg)),
      dit_(cfg_.dit, store_, seed),
      layout_(cfg_.layout, store_, seed),
      ctrl_(dit_, cfg_.ctrl_blocks, store_) {}

AcdModel::StreamOutput AcdModel::run(const Tensor& z, double t, int cls, const Tensor& c_layout,
                                     CaptureRole capture, bool use_lora, bool with_head) const {
    TokenGrid g;
    Tensor tok = dit_.patchify(z, &g);
    Tensor cond = dit_.condition(t, cls);
    std::vector<Tensor> res;
    if (c_layout.defined()) res = ctrl_.forward(tok, c_layout, cond);
    ForwardOptions o;
    o.capture = capture;
    o.use_lora = use_lora;
    o.residuals = res;
    ForwardResult fr = dit_.forward(tok, cond, o);
    StreamOutput out;
    out.projections = std::move(fr.trace.projections);
    if (with_head) out.velocity = dit_.output(fr.hidden, cond, g);
    return out;
}

VelocityFn AcdModel::velocity_fn(int cls, const Tensor& c_layout) const {
    Tensor zero = c_layout.defined() ? Tensor(c_layout.shape(), 0.0) : Tensor();
    return [this, cls, c_layout, zero](const Tensor& z, double t, bool conditional) {
        if (conditional) return run(z, t, cls, c_layout, CaptureRole::none, true, true).velocity;
        return run(z, t, 0, zero, CaptureRole::none, true, true).velocity;
    };
}

Tensor apply_mask(const Tensor& video, const Tensor& mask) {
    const Shape& v = video.shape();
    if (v.size() != 4 || mask.ndim() != 3 || mask.dim(0) != v[0] || mask.dim(1) != v[1] || mask.dim(2) != v[2]) {
        throw ShapeError("apply_mask: video " + to_string(v) + " vs mask " + to_string(mask.shape()));
    }
    return mul(video, reshape(mask, {v[0], v[1], v[2], 1}));
}

double attention_alignment(const AcdModel& model, const VideoSample& sample, double t, std::uint64_t noise_seed) {
    NoGradGuard no_grad;
    const ModelConfig& mc = model.config();
    Tensor mask = derive_mask(sample.signals);
    Tensor target = target_map(mask, mc.codec.patch_t, mc.codec.patch_s).normalized;
    Tensor z0 = encode_video(sample.rgb, mc.codec);
    Tensor zt = noise_sample(z0, normal_tensor(z0.shape(), noise_seed), t);
    Tensor c = model.layout().encode(sample.signals);
    auto keys = model.run(zt, t, sample.prompt_class, c, CaptureRole::key_stream, true, false);
    Tensor zm = encode_video(apply_mask(sample.rgb, mask), mc.codec);
    auto queries = model.run(zm, t, sample.prompt_class, c, CaptureRole::query_stream, true, false);
    return attention_loss(queries.projections, keys.projections, target, mc.dit.heads, mc.dit.layers).item();
}

std::string_view mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::ctrl_branch: return "ctrl_branch";
        case TrainMode::post_train: return "post_train";
        case TrainMode::joint_train: return "joint_train";
    }
    return "?";
}

TrainMode parse_mode(std::string_view s) {
    if (s == "ctrl_branch") return TrainMode::ctrl_branch;
    if (s == "post_train") return TrainMode::post_train;
    if (s == "joint_train") return TrainMode::joint_train;
    throw std::invalid_argument("unknown training mode '" + std::string(s) +
                                "' (expected ctrl_branch, post_train or joint_train)");
}

std::string_view phase_name(Phase p) {
    switch (p) {
        case Phase::pretrain: return "pretrain";
        case Phase::ctrl_only: return "ctrl_only";
        case Phase::full: return "full";
    }
    return "?";
}

void AcdConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("training config: " + m); };
    if (!(lambda_diff > 0.0)) fail("lambda_diff must be positive");
    if (!(lambda_attn >= 0.0)) fail("lambda_attn must be nonnegative");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
    if (!(cfg_dropout >= 0.0 && cfg_dropout <= 1.0)) fail("cfg_dropout must lie in [0, 1]");
    if (!(post_train_split >= 0.0 && post_train_split <= 1.0)) fail("post_train_split must lie in [0, 1]");
}

Phase AcdConfig::phase_at(std::size_t step) const {
    if (step < pretrain_steps) return Phase::pretrain;
    const std::size_t k = step - pretrain_steps;
    switch (mode) {
        case TrainMode::joint_train: return Phase::full;
        case TrainMode::ctrl_branch: return Phase::ctrl_only;
        case TrainMode::post_train: {
            auto split = static_cast<std::size_t>(post_train_split * static_cast<double>(max_steps));
            return k < split ? Phase::ctrl_only : Phase::full;
        }
    }
    return Phase::full;
}

bool AcdConfig::trainable(Phase p, Partition part) const {
    switch (p) {
        case Phase::pretrain: return part == Partition::frozen_base || part == Partition::heads;
        case Phase::ctrl_only: return part == Partition::controlnet || part == Partition::layout_enc;
        case Phase::full: return part != Partition::frozen_base;
    }
    return false;
}

double AcdConfig::attn_weight(Phase p) const { return p == Phase::full ? lambda_attn : 0.0; }

std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch, std::size_t step,
                                       std::uint64_t seed) {
    if (dataset_size == 0) throw std::invalid_argument("batch_indices: empty dataset");
    std::vector<std::size_t> out;
    std::size_t cached_epoch = static_cast<std::size_t>(-1);
    std::vector<std::size_t> perm(dataset_size);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t global = step * batch + b;
        const std::size_t epoch = global / dataset_size;
        if (epoch != cached_epoch) {
            for (std::size_t i = 0; i < dataset_size; ++i) perm[i] = i;
            Rng rng(derive_seed(seed, 0xE90C4ull, epoch));
            for (std::size_t i = dataset_size; i > 1; --i) {
                auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
                std::swap(perm[i - 1], perm[j]);
            }
            cached_epoch = epoch;
        }
        out.push_back(perm[global % dataset_size]);
    }
    return out;
}

namespace {

void adam_update(ParamStore& store, TrainState& state, const AcdConfig& cfg, Phase phase) {
    auto& entries = store.entries();
    state.m.resize(entries.size());
    state.v.resize(entries.size());
    state.count.resize(entries.size(), 0);
    const auto f = [](double x) { return round_to(x, Precision::f32); };
    for (std::size_t i = 0; i < entries.size(); ++i) {
        ParamEntry& e = entries[i];
        if (!cfg.trainable(phase, e.partition) || !e.tensor.has_grad()) continue;
        auto g = e.tensor.grad();
        auto p = e.tensor.mutable_values();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.empty()) {
            m.assign(p.size(), 0.0);
            v.assign(p.size(), 0.0);
        }
        const auto c = static_cast<double>(++state.count[i]);
        const double bc1 = 1.0 - std::pow(cfg.beta1, c);
        const double bc2 = 1.0 - std::pow(cfg.beta2, c);
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = f(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j]);
            v[j] = f(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j]);
            double next = f(p[j] - cfg.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.adam_eps));
            if (!std::isfinite(next)) {
                throw NonFiniteError("adam: non-finite update for " + e.name);
            }
            p[j] = next;
        }
    }
}

}  // namespace

StepLosses train_step(AcdModel& model, TrainState& state, const AcdConfig& cfg,
                      std::span<const VideoSample* const> batch) {
    const ModelConfig& mc = model.config();
    const Phase phase = cfg.phase_at(state.step);
    const double la = cfg.attn_weight(phase);
    const bool branch_on = phase != Phase::pretrain;
    ParamStore& store = model.store();
    store.set_requires_grad([&](Partition p) { return cfg.trainable(phase, p); });
    Graph::local().reset();

    StepLosses out;
    try {
        PrecisionGuard precision(Precision::f32);
        Tensor total;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const VideoSample& s = *batch[b];
            Rng rng(derive_seed(derive_seed(cfg.seed, 0x57E9ull), state.step, b));
            Tensor mask, target;
            try {
                // Small objects can vanish under nearest downsampling; those
                // samples are skipped like empty masks.
                mask = derive_mask(s.signals);
                target = target_map(mask, mc.codec.patch_t, mc.codec.patch_s).normalized;
            } catch (const std::invalid_argument&) {
                ++out.skipped;
                continue;
            }
            Tensor z0 = encode_video(s.rgb, mc.codec);
            const double t = rng.uniform();
            Tensor eps = normal_tensor(z0.shape(), rng.next());
            const bool drop = rng.uniform() < cfg.cfg_dropout;
            const int cls = drop ? 0 : s.prompt_class;
            Tensor c_layout;
            if (branch_on) {
                const std::size_t n = z0.dim(0) * z0.dim(1) * z0.dim(2);
                c_layout = drop ? Tensor(Shape{n, mc.dit.dim}, 0.0) : model.layout().encode(s.signals);
            }
            Tensor zt = noise_sample(z0, eps, t);
            const bool with_attn = la > 0.0;
            auto noisy = model.run(zt, t, cls, c_layout, with_attn ? CaptureRole::key_stream : CaptureRole::none,
                                   branch_on, true);
            Tensor l_diff = cfm_loss(noisy.velocity, z0, eps);
            Tensor l = scale(l_diff, cfg.lambda_diff);
            if (with_attn) {
                Tensor zm = encode_video(apply_mask(s.rgb, mask), mc.codec);
                auto masked = model.run(zm, t, cls, c_layout, CaptureRole::query_stream, branch_on, false);
                Tensor l_attn =
                    attention_loss(masked.projections, noisy.projections, target, mc.dit.heads, mc.dit.layers);
                l = add(l, scale(l_attn, la));
                out.attn += l_attn.item();
            }
            out.diff += l_diff.item();
            total = total.defined() ? add(total, l) : l;
            ++out.used;
        }
        if (out.used > 0) {
            const double inv = 1.0 / static_cast<double>(out.used);
            Tensor loss = scale(total, inv);
            out.total = loss.item();
            out.diff *= inv;
            out.attn *= inv;
            if (loss.requires_grad()) {
                backward(loss);
                adam_update(store, state, cfg, phase);
            }
        }
    } catch (const NonFiniteError& e) {
        Graph::local().reset();
        throw NonFiniteError("train step " + std::to_string(state.step + 1) + " (" +
                             std::string(phase_name(phase)) + "): " + e.what());
    }
    Graph::local().reset();
    store.zero_grads();
    ++state.step;
    return out;
}

void TrainState::save(const fs::path& dir, const ParamStore& store) const {
    const fs::path od = dir / "optim";
    fs::create_directories(od);
    std::vector<TensorFile> files;
    std::ofstream counts(od / "counts.txt", std::ios::trunc);
    const auto& entries = store.entries();
    for (std::size_t i = 0; i < entries.size() && i < m.size(); ++i) {
        if (m[i].empty()) continue;
        const Shape& shape = entries[i].tensor.shape();
        for (const auto& [tag, vec] : {std::pair{"m", &m[i]}, std::pair{"v", &v[i]}}) {
            TensorFile f{std::string(tag) + "." + entries[i].name, std::string(tag) + "." + entries[i].name + ".acdt",
                         shape};
            save_acdt(od / f.file, Tensor(shape, *vec));
            files.push_back(std::move(f));
        }
        counts << entries[i].name << ' ' << count[i] << '\n';
    }
    write_manifest(od, files);
    std::ofstream st(dir / "state.txt", std::ios::trunc);
    st << "step " << step << '\n';
    if (!counts || !st) throw std::runtime_error("checkpoint: failed to write optimizer state in " + dir.string());
}

void TrainState::load(const fs::path& dir, const ParamStore& store) {
    std::ifstream st(dir / "state.txt");
    std::string key;
    if (!(st >> key >> step) || key != "step") {
        throw std::runtime_error("checkpoint: unreadable " + (dir / "state.txt").string());
    }
    const auto& entries = store.entries();
    m.assign(entries.size(), {});
    v.assign(entries.size(), {});
    count.assign(entries.size(), 0);
    const fs::path od = dir / "optim";
    std::map<std::string, std::uint64_t> counts;
    std::ifstream cs(od / "counts.txt");
    std::string name;
    std::uint64_t c = 0;
    while (cs >> name >> c) counts[name] = c;
    std::map<std::string, TensorFile> files;
    for (auto& f : read_manifest(od)) files.emplace(f.name, f);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto it = counts.find(entries[i].name);
        if (it == counts.end()) continue;
        count[i] = it->second;
        for (const auto& [tag, vec] : {std::pair{"m.", &m[i]}, std::pair{"v.", &v[i]}}) {
            auto f = files.find(tag + entries[i].name);
            if (f == files.end()) {
                throw std::runtime_error("checkpoint: missing optimizer moment " + std::string(tag) + entries[i].name);
            }
            Tensor t = load_acdt(od / f->second.file);
            if (t.shape() != entries[i].tensor.shape()) {
                throw ShapeError("checkpoint: optimizer moment shape mismatch for " + entries[i].name);
            }
            vec->assign(t.values().begin(), t.values().end());
        }
    }
}

void save_checkpoint(const fs::path& dir, const AcdModel& model, const TrainState& state,
                     const std::map<std::string, std::string>& extra_files) {
    fs::path tmp = dir;
    tmp += ".tmp";
    try {
        fs::remove_all(tmp);
        fs::create_directories(tmp);
        save_params(tmp, model.store());
        state.save(tmp, model.store());
        for (const auto& [name, content] : extra_files) {
            std::ofstream os(tmp / name, std::ios::binary | std::ios::trunc);
            os << content;
            if (!os) throw std::runtime_error("cannot write " + (tmp / name).string());
        }
        fs::remove_all(dir);
        fs::rename(tmp, dir);
    } catch (const std::exception& e) {
        throw std::runtime_error("checkpoint: write to " + dir.string() + " failed: " + e.what());
    }
}

void load_checkpoint(const fs::path& dir, AcdModel& model, TrainState* state) {
    if (!fs::is_directory(dir)) throw std::runtime_error("checkpoint: no such directory " + dir.string());
    load_params(dir, model.store());
    if (state) state->load(dir, model.store());
}

namespace {

std::string format_row(std::size_t step, const StepLosses& l, double wall_ms) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.3f", step, l.total, l.diff, l.attn, wall_ms);
    return buf;
}

constexpr const char* kLogHeader = "step,L,L_diff,L_attn,wall_ms";

// Keeps the header and rows up to `step` so a resumed run continues the log.
void truncate_log(const fs::path& log, std::size_t step) {
    std::vector<std::string> keep{kLogHeader};
    std::ifstream is(log);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (std::stoull(line.substr(0, line.find(','))) <= step) keep.push_back(line);
    }
    is.close();
    std::ofstream os(log, std::ios::trunc);
    for (const auto& l : keep) os << l << '\n';
}

bool is_base_or_heads(const ParamEntry& e) {
    return e.partition == Partition::frozen_base || e.partition == Partition::heads;
}

}  // namespace

RunSummary run_training(AcdModel& model, const std::vector<VideoSample>& data, const AcdConfig& cfg,
                        const RunOptions& opts) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("training: dataset is empty");
    TrainState state;
    if (!opts.resume_from.empty()) {
        load_checkpoint(opts.resume_from, model, &state);
    } else if (!opts.init_ckpt.empty()) {
        load_params(opts.init_ckpt, model.store(), is_base_or_heads);
        model.controlnet().copy_from(model.dit());
    }
    fs::create_directories(opts.out_dir);
    const fs::path log_path = opts.out_dir / "log.csv";
    if (!opts.resume_from.empty() && fs::exists(log_path)) {
        truncate_log(log_path, state.step);
    } else {
        std::ofstream(log_path, std::ios::trunc) << kLogHeader << '\n';
    }
    std::ofstream log(log_path, std::ios::app);
    if (!log) throw std::runtime_error("training: cannot open " + log_path.string());

    RunSummary summary;
    const std::size_t total = cfg.pretrain_steps + cfg.max_steps;
    if (state.step >= cfg.pretrain_steps) summary.base_hash_start = model.store().hash(Partition::frozen_base);
    std::vector<const VideoSample*> batch(cfg.batch_size);
    while (state.step < total) {
        if (cfg.pretrain_steps > 0 && state.step == cfg.pretrain_steps) {
            model.controlnet().copy_from(model.dit());
            summary.base_hash_start = model.store().hash(Partition::frozen_base);
        }
        auto idx = batch_indices(data.size(), cfg.batch_size, state.step, cfg.seed);
        for (std::size_t b = 0; b < idx.size(); ++b) batch[b] = &data[idx[b]];
        auto t0 = std::chrono::steady_clock::now();
        StepLosses l = train_step(model, state, cfg, batch);
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        summary.skipped_samples += l.skipped;
        ++summary.steps;
        log << format_row(state.step, l, ms) << '\n' << std::flush;
        if (!opts.quiet && (state.step % 25 == 0 || state.step == total)) {
            std::cerr << "step " << state.step << '/' << total << " [" << phase_name(cfg.phase_at(state.step - 1))
                      << "] L=" << l.total << " L_diff=" << l.diff << " L_attn=" << l.attn << '\n';
        }
        if (l.skipped && !opts.quiet) {
            std::cerr << "warning: step " << state.step << " skipped " << l.skipped << " empty-mask samples\n";
        }
        if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && state.step < total) {
            char name[32];
            std::snprintf(name, sizeof name, "step_%06zu", state.step);
            save_checkpoint(opts.out_dir / name, model, state, opts.extra_files);
        }
    }
    summary.final_ckpt = opts.out_dir / "final";
    save_checkpoint(summary.final_ckpt, model, state, opts.extra_files);
    summary.base_hash_end = model.store().hash(Partition::frozen_base);
    if (cfg.pretrain_steps == total) summary.base_hash_start = summary.base_hash_end;
    return summary;
}

}  // namespace acd
