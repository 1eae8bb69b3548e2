// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Metrics, run configuration, checkpoint evaluation and the command line.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acd/acd.hpp"
#include "acd/synthdata.hpp"

namespace acd {

// Videos are [T, H, W, C] with values in [0, 1]. Per-frame PSNR capped at
// 99 dB, averaged over frames.
inline constexpr double kPsnrCap = 99.0;
double psnr(const Tensor& a, const Tensor& b);

// Mean SSIM over non-overlapping window x window tiles (trailing partial
// tiles dropped), channels and frames. Population statistics,
// C1 = 0.01^2, C2 = 0.03^2.
double ssim(const Tensor& a, const Tensor& b, std::size_t window = 8);

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConfigKey {
    const char* name;
    const char* default_value;
    enum Kind { integer, real, flag, mode, text } kind;
    const char* doc;
};

// key=value run configuration. Lines may carry '#' comments. Unknown keys,
// duplicates and malformed values are rejected. Values are kept as written,
// so to_text() of a parsed file re-parses to the same run.
class RunConfig {
public:
    RunConfig();
    static RunConfig parse(std::string_view text);
    static RunConfig load(const std::filesystem::path& path);
    static std::span<const ConfigKey> keys();

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    double real(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    std::uint64_t seed(const std::string& key) const;
    bool flag(const std::string& key) const;

    // Every key in table order, one key=value per line.
    std::string to_text() const;

    ModelConfig model() const;
    AcdConfig train() const;
    SamplerConfig sampler() const;

private:
    std::map<std::string, std::string> values_;
};

struct EvalRow {
    std::string id;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double attn_err = 0.0;  // NaN when the target map is empty
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_psnr_db = 0.0;
    double mean_ssim = 0.0;
    double mean_attn_err = 0.0;  // over rows with a finite value
    double wall_ms = 0.0;

    std::string csv() const;      // sample_id,psnr_db,ssim,attn_err
    std::string summary() const;  // excludes wall-clock, so it is reproducible
};

struct EvalOptions {
    SamplerConfig sampler;
    std::uint64_t seed = 0;
    bool bypass_sampling = false;  // score the ground truth against itself
};

// Timesteps for the attention-alignment metric: 0.1, 0.2, ..., 0.9.
std::vector<double> attention_t_grid();
double attention_alignment_error(const AcdModel& model, const VideoSample& sample, std::uint64_t seed);

// Generates a video for the sample's layout and prompt class; decoded and
// clamped to [0, 1].
Tensor generate_video(const AcdModel& model, const VideoSample& sample, const SamplerConfig& sampler,
                      std::uint64_t seed);

EvalReport evaluate(const AcdModel& model, std::span<const Sample> eval_set, const EvalOptions& opts);

// Model from <ckpt>/config.txt (defaults when absent) and the checkpoint
// parameters. Missing tensors raise an error naming them.
std::unique_ptr<AcdModel> load_model(const std::filesystem::path& ckpt);

// Scene seeds recorded at training time in <ckpt>/data_seeds.txt.
std::vector<std::uint64_t> training_seeds(const std::filesystem::path& ckpt);

// load_model + a disjointness check against the training seeds + evaluate.
EvalReport eval_checkpoint(const std::filesystem::path& ckpt, std::span<const Sample> eval_set,
                           const EvalOptions& opts);

// report.csv and summary.txt.
void write_report(const EvalReport& report, const std::filesystem::path& out_dir);

// Binary PPM (P6) of one frame of a [T, H, W, 3] video.
void write_ppm(const std::filesystem::path& path, const Tensor& video, std::size_t frame);

struct GradCheckLine {
    std::string module;
    std::string name;
    double max_rel_error = 0.0;
};

// Central-difference checks at 64-bit, h = 1e-5. module is one of all,
// tensorcore, dit, layout, controlnet, flow, acd.
std::vector<GradCheckLine> run_grad_checks(std::string_view module, std::uint64_t seed = 0);
inline constexpr double kGradTolerance = 1e-4;

// Exit codes: 0 success, 1 usage error, 2 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace acd
