// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Attention-conditional training: the full model bundle, cross-attention
// maps between a masked clean stream (queries) and the noisy stream (keys),
// the response-map loss, and the training loop with its three modes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acd/controlnet.hpp"
#include "acd/dit.hpp"
#include "acd/flow.hpp"
#include "acd/latent_codec.hpp"
#include "acd/layout.hpp"

namespace acd {

struct VideoSample {
    std::string id;
    Tensor rgb;  // [T, H, W, C] in [0, 1]
    ControlSignals signals;
    int prompt_class = 0;
};

// softmax(Q_h K_h^T / sqrt(d/heads)) per head over the key axis, averaged
// over heads. heads = 1 gives the plain d-width map. Result is [N, N].
Tensor cross_attention_map(const Tensor& q_mask, const Tensor& k, std::size_t heads = 1);

// Column means of a row-stochastic [N, N] map; [N].
Tensor response_map(const Tensor& m);

// sum over layers and tokens of (response - target)^2, divided by
// (layers * N). `target` is the sum-normalized target map.
Tensor attention_loss(std::span<const Tensor> queries, std::span<const Tensor> keys, const Tensor& target,
                      std::size_t heads, std::size_t expected_layers);

struct ModelConfig {
    DiTConfig dit;
    LayoutConfig layout;
    CodecConfig codec;
    std::size_t ctrl_blocks = 2;
    std::size_t channels = 3;
    std::size_t frames = 8, height = 16, width = 16;

    // Cross-checks widths, patch sizes and token counts between modules.
    void validate() const;
};

// Owns the parameter store and every module built over it. Not copyable:
// module tensors share storage with the store.
class AcdModel {
public:
    AcdModel(const ModelConfig& cfg, std::uint64_t seed);
    AcdModel(const AcdModel&) = delete;
    AcdModel& operator=(const AcdModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    DiT& dit() { return dit_; }
    const DiT& dit() const { return dit_; }
    LayoutEncoder& layout() { return layout_; }
    const LayoutEncoder& layout() const { return layout_; }
    ControlNet& controlnet() { return ctrl_; }
    const ControlNet& controlnet() const { return ctrl_; }

    struct StreamOutput {
        Tensor velocity;                  // latent shaped, only when with_head
        std::vector<Tensor> projections;  // per-layer Q or K when captured
    };

    // One pass of the shared network over latent z. c_layout may be
    // undefined, which skips the ControlNet.
    StreamOutput run(const Tensor& z, double t, int cls, const Tensor& c_layout, CaptureRole capture,
                     bool use_lora, bool with_head) const;

    // Velocity for the sampler: conditional uses (cls, layout tokens), the
    // unconditional branch uses the null context with zero layout tokens.
    VelocityFn velocity_fn(int cls, const Tensor& c_layout) const;

private:
    ModelConfig cfg_;
    ParamStore store_;
    DiT dit_;
    LayoutEncoder layout_;
    ControlNet ctrl_;
};

// Pixel-space masking: video [T,H,W,C] times mask [T,H,W].
Tensor apply_mask(const Tensor& video, const Tensor& mask);

// L_attn for one sample at a fixed t and noise seed, no dropout, no grad.
double attention_alignment(const AcdModel& model, const VideoSample& sample, double t, std::uint64_t noise_seed);

enum class TrainMode : std::uint8_t { ctrl_branch, post_train, joint_train };
std::string_view mode_name(TrainMode m);
TrainMode parse_mode(std::string_view s);

enum class Phase : std::uint8_t { pretrain, ctrl_only, full };
std::string_view phase_name(Phase p);

struct AcdConfig {
    double lambda_diff = 1.0;
    // L_attn is a squared error between probability vectors over N tokens, so
    // it sits near 1/(kN) for k target tokens (about 2e-4 at desk scale).
    // 1000 puts the weighted term on the order of L_diff.
    double lambda_attn = 1000.0;
    TrainMode mode = TrainMode::joint_train;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::size_t max_steps = 500;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    double cfg_dropout = 0.1;
    double post_train_split = 0.5;  // fraction of max_steps spent in phase 1
    // Base-model stage before the attention-conditional stage: base blocks
    // and heads trained on L_diff only, no ControlNet, no LoRA.
    std::size_t pretrain_steps = 0;
    std::size_t checkpoint_every = 0;  // 0 writes only the final checkpoint

    void validate() const;
    Phase phase_at(std::size_t step) const;  // step is 0-based over pretrain + max_steps
    bool trainable(Phase p, Partition part) const;
    double attn_weight(Phase p) const;
};

struct StepLosses {
    double total = 0.0;
    double diff = 0.0;
    double attn = 0.0;
    std::size_t used = 0;     // samples contributing
    std::size_t skipped = 0;  // samples dropped for empty masks
};

// Adam moments per store entry, allocated on first update, plus per-tensor
// update counts for bias correction.
struct TrainState {
    std::size_t step = 0;
    std::vector<std::vector<double>> m, v;
    std::vector<std::uint64_t> count;

    void save(const std::filesystem::path& dir, const ParamStore& store) const;
    void load(const std::filesystem::path& dir, const ParamStore& store);
};

// One optimization step on `batch` at global step state.step (0-based), then
// advances state.step. All randomness derives from (cfg.seed, step, slot).
StepLosses train_step(AcdModel& model, TrainState& state, const AcdConfig& cfg,
                      std::span<const VideoSample* const> batch);

// Batch composition for a step: epoch-wise seeded shuffles over the dataset.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch, std::size_t step,
                                       std::uint64_t seed);

struct RunOptions {
    std::filesystem::path out_dir;
    std::filesystem::path resume_from;  // checkpoint dir, empty for a fresh run
    std::filesystem::path init_ckpt;    // base + heads to start from, optional
    // Written verbatim into every checkpoint directory, e.g. the resolved config.
    std::map<std::string, std::string> extra_files;
    bool quiet = true;
};

struct RunSummary {
    std::size_t steps = 0;
    std::size_t skipped_samples = 0;
    std::uint64_t base_hash_start = 0;  // frozen base after any pretrain stage
    std::uint64_t base_hash_end = 0;
    std::filesystem::path final_ckpt;
};

// Writes <out>/log.csv (step,L,L_diff,L_attn,wall_ms), periodic
// <out>/step_NNNNNN checkpoints and <out>/final.
RunSummary run_training(AcdModel& model, const std::vector<VideoSample>& data, const AcdConfig& cfg,
                        const RunOptions& opts);

// Checkpoint directory: params.idx + tensors, optim/, state.txt, extra files.
void save_checkpoint(const std::filesystem::path& dir, const AcdModel& model, const TrainState& state,
                     const std::map<std::string, std::string>& extra_files);
void load_checkpoint(const std::filesystem::path& dir, AcdModel& model, TrainState* state);

}  // namespace acd
