// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "acd/evalcli.hpp"
#include "acd/ops.hpp"

namespace acd {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << text;
    if (!os) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

std::vector<double> attention_t_grid() {
    std::vector<double> g;
    for (int k = 1; k <= 9; ++k) g.push_back(k / 10.0);
    return g;
}

double attention_alignment_error(const AcdModel& model, const VideoSample& sample, std::uint64_t seed) {
    const auto grid = attention_t_grid();
    double total = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        total += attention_alignment(model, sample, grid[k], derive_seed(seed, 0xA77Eull, k));
    }
    return total / static_cast<double>(grid.size());
}

Tensor generate_video(const AcdModel& model, const VideoSample& s, const SamplerConfig& sampler,
                      std::uint64_t seed) {
    NoGradGuard no_grad;
    const ModelConfig& mc = model.config();
    Tensor c = model.layout().encode(s.signals);
    const Shape video{mc.frames, mc.height, mc.width, mc.channels};
    Tensor z = sample(model.velocity_fn(s.prompt_class, c), latent_shape(video, mc.codec), sampler, seed);
    Tensor v = decode_latent(z, mc.channels, mc.codec);
    std::vector<double> out(v.values().begin(), v.values().end());
    for (double& x : out) x = std::clamp(x, 0.0, 1.0);
    return Tensor(v.shape(), std::move(out));
}

EvalReport evaluate(const AcdModel& model, std::span<const Sample> eval_set, const EvalOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    EvalReport r;
    double attn_sum = 0.0;
    std::size_t attn_n = 0;
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const VideoSample& s = eval_set[i].data;
        EvalRow row;
        row.id = s.id;
        Tensor gen = opts.bypass_sampling ? s.rgb : generate_video(model, s, opts.sampler, derive_seed(opts.seed, 0xE7A1ull, i));
        row.psnr_db = psnr(gen, s.rgb);
        row.ssim = ssim(gen, s.rgb);
        try {
            row.attn_err = attention_alignment_error(model, s, derive_seed(opts.seed, 0xA11Cull, i));
            attn_sum += row.attn_err;
            ++attn_n;
        } catch (const std::invalid_argument&) {
            row.attn_err = std::numeric_limits<double>::quiet_NaN();
        }
        r.mean_psnr_db += row.psnr_db;
        r.mean_ssim += row.ssim;
        r.rows.push_back(row);
    }
    if (!r.rows.empty()) {
        r.mean_psnr_db /= static_cast<double>(r.rows.size());
        r.mean_ssim /= static_cast<double>(r.rows.size());
    }
    r.mean_attn_err = attn_n ? attn_sum / static_cast<double>(attn_n) : std::numeric_limits<double>::quiet_NaN();
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

std::string EvalReport::csv() const {
    std::string out = "sample_id,psnr_db,ssim,attn_err\n";
    for (const EvalRow& row : rows) {
        out += row.id + "," + fmt(row.psnr_db) + "," + fmt(row.ssim) + "," + fmt(row.attn_err) + "\n";
    }
    return out;
}

std::string EvalReport::summary() const {
    std::ostringstream os;
    os << "samples " << rows.size() << "\n"
       << "mean_psnr_db " << fmt(mean_psnr_db) << "\n"
       << "mean_ssim " << fmt(mean_ssim) << "\n"
       << "mean_attn_err " << fmt(mean_attn_err) << "\n";
    return os.str();
}

std::unique_ptr<AcdModel> load_model(const fs::path& ckpt) {
    if (!fs::is_directory(ckpt)) throw std::runtime_error("checkpoint directory not found: " + ckpt.string());
    const fs::path cfg_path = ckpt / "config.txt";
    RunConfig cfg = fs::exists(cfg_path) ? RunConfig::load(cfg_path) : RunConfig();
    auto model = std::make_unique<AcdModel>(cfg.model(), cfg.seed("model_seed"));
    load_checkpoint(ckpt, *model, nullptr);
    return model;
}

std::vector<std::uint64_t> training_seeds(const fs::path& ckpt) {
    std::vector<std::uint64_t> out;
    std::ifstream is(ckpt / "data_seeds.txt");
    std::uint64_t s = 0;
    while (is >> s) out.push_back(s);
    return out;
}

EvalReport eval_checkpoint(const fs::path& ckpt, std::span<const Sample> eval_set, const EvalOptions& opts) {
    auto model = load_model(ckpt);
    const auto seeds = training_seeds(ckpt);
    const std::set<std::uint64_t> train(seeds.begin(), seeds.end());
    for (const Sample& s : eval_set) {
        if (train.count(s.scene.seed)) {
            throw std::runtime_error("eval set overlaps the training data: " + s.data.id + " (scene seed " +
                                     std::to_string(s.scene.seed) + ")");
        }
    }
    return evaluate(*model, eval_set, opts);
}

void write_report(const EvalReport& report, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_file(out_dir / "report.csv", report.csv());
    write_file(out_dir / "summary.txt", report.summary());
}

void write_ppm(const fs::path& path, const Tensor& video, std::size_t frame) {
    if (video.ndim() != 4 || video.dim(3) != 3 || frame >= video.dim(0)) {
        throw ShapeError("write_ppm: need [T,H,W,3] and frame < T, got " + to_string(video.shape()));
    }
    const std::size_t H = video.dim(1), W = video.dim(2);
    std::string bytes = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    const auto v = video.values();
    for (std::size_t k = frame * H * W * 3; k < (frame + 1) * H * W * 3; ++k) {
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v[k], 0.0, 1.0) * 255.0))));
    }
    write_file(path, bytes);
}

}  // namespace acd
