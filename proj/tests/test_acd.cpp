// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "acd/acd.hpp"
#include "acd/grad_check.hpp"
#include "acd/ops.hpp"
#include "acd/synthdata.hpp"
#include "test_util.hpp"

using namespace acd;
using acd::testing::bit_equal;
using acd::testing::random_normal;
namespace fs = std::filesystem;

namespace {

// T=4, 8x8 RGB, 2x2x2 patches: latent [2,4,4,24], N=32.
ModelConfig tiny_model() {
    ModelConfig m;
    m.frames = 4;
    m.height = 8;
    m.width = 8;
    m.dit.dim = 12;
    m.dit.heads = 2;
    m.dit.layers = 2;
    m.dit.ffn_mult = 2;
    m.dit.max_tokens = 32;
    m.dit.lora_rank = 2;
    m.dit.lora_alpha = 4.0;
    m.dit.latent_channels = 24;
    m.layout.dim = 12;
    m.layout.lift_channels = 4;
    m.ctrl_blocks = 1;
    return m;
}

SynthConfig tiny_synth() {
    SynthConfig s;
    s.frames = 4;
    s.height = 8;
    s.width = 8;
    s.focal = 8.0;
    return s;
}

std::vector<VideoSample> tiny_data(std::size_t n, std::uint64_t seed) {
    std::vector<VideoSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(render(generate_scene(sample_seed(seed, i), tiny_synth()), tiny_synth()).data);
    }
    return out;
}

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor(Shape{r, c}, std::move(v)); }

double brute_loss(const std::vector<Tensor>& qs, const std::vector<Tensor>& ks, const std::vector<double>& target,
                  std::size_t heads) {
    const std::size_t n = qs[0].dim(0), d = qs[0].dim(1), dh = d / heads;
    double total = 0.0;
    for (std::size_t l = 0; l < qs.size(); ++l) {
        std::vector<double> resp(n, 0.0);
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> row(n);
                double mx = -1e300;
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) {
                        s += qs[l].values()[i * d + e] * ks[l].values()[j * d + e];
                    }
                    row[j] = s / std::sqrt(static_cast<double>(dh));
                    mx = std::max(mx, row[j]);
                }
                double z = 0.0;
                for (double& x : row) z += (x = std::exp(x - mx));
                for (std::size_t j = 0; j < n; ++j) resp[j] += row[j] / z / static_cast<double>(n * heads);
            }
        }
        for (std::size_t j = 0; j < n; ++j) total += (resp[j] - target[j]) * (resp[j] - target[j]);
    }
    return total / static_cast<double>(qs.size() * n);
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream is(p);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(is, line)) out.push_back(line);
    return out;
}

std::string drop_wall(const std::string& row) { return row.substr(0, row.rfind(',')); }

}  // namespace

TEST_CASE("cross-attention map examples") {
    Rng rng(1);
    Tensor k = random_normal(rng, {5, 4});
    Tensor m = cross_attention_map(Tensor(Shape{5, 4}, 0.0), k);
    for (double v : m.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
    Tensor one = cross_attention_map(random_normal(rng, {1, 4}), random_normal(rng, {1, 4}), 2);
    CHECK(one.shape() == Shape{1, 1});
    CHECK(one.item() == 1.0);

    // Q = [[1,0],[0,2]], K = [[1,1],[0,1]], d = 2.
    Tensor hand = cross_attention_map(mat(2, 2, {1, 0, 0, 2}), mat(2, 2, {1, 1, 0, 1}));
    const double s = 1.0 / std::sqrt(2.0);
    double r0 = std::exp(s) / (std::exp(s) + 1.0);
    double r1 = std::exp(2 * s) / (std::exp(2 * s) + std::exp(2 * s));
    CHECK(hand.values()[0] == doctest::Approx(r0).epsilon(1e-14));
    CHECK(hand.values()[1] == doctest::Approx(1 - r0).epsilon(1e-14));
    CHECK(hand.values()[2] == doctest::Approx(r1).epsilon(1e-14));
    CHECK(hand.values()[3] == doctest::Approx(1 - r1).epsilon(1e-14));
    CHECK_THROWS_AS(cross_attention_map(mat(2, 2, {1, 0, 0, 1}), Tensor(Shape{3, 2}, 0.0)), ShapeError);
    CHECK_THROWS_AS(cross_attention_map(Tensor(Shape{2, 3}, 0.0), Tensor(Shape{2, 3}, 0.0), 2), ShapeError);
}

TEST_CASE("cross-attention rows and responses sum to one") {
    Rng rng(2);
    for (std::size_t heads : {1u, 2u, 4u}) {
        Tensor m = cross_attention_map(random_normal(rng, {16, 8}, 2.0), random_normal(rng, {16, 8}, 2.0), heads);
        for (std::size_t i = 0; i < 16; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 16; ++j) s += m.values()[i * 16 + j];
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
        double rs = 0.0;
        Tensor r = response_map(m);
        for (double v : r.values()) rs += v;
        CHECK(std::abs(rs - 1.0) < 1e-6);
    }
}

TEST_CASE("response map examples") {
    Tensor u(Shape{4, 4}, 0.25);
    Tensor ru = response_map(u);
    for (double v : ru.values()) CHECK(v == 0.25);
    Tensor eye = mat(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor re = response_map(eye);
    for (double v : re.values()) CHECK(v == doctest::Approx(1.0 / 3.0));
    Rng rng(3);
    std::vector<double> rows(25);
    for (std::size_t i = 0; i < 5; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) s += rows[i * 5 + j] = rng.uniform();
        for (std::size_t j = 0; j < 5; ++j) rows[i * 5 + j] /= s;
    }
    Tensor r = response_map(mat(5, 5, rows));
    for (std::size_t j = 0; j < 5; ++j) {
        double want = 0.0;
        for (std::size_t i = 0; i < 5; ++i) want += rows[i * 5 + j];
        CHECK(r.values()[j] == doctest::Approx(want / 5.0).epsilon(1e-14));
    }
    CHECK_THROWS_AS(response_map(Tensor(Shape{2, 3}, 0.5)), ShapeError);
}

TEST_CASE("attention loss matches the loop oracle") {
    Rng rng(4);
    for (std::size_t heads : {1u, 2u}) {
        std::vector<Tensor> qs{random_normal(rng, {4, 6}), random_normal(rng, {4, 6})};
        std::vector<Tensor> ks{random_normal(rng, {4, 6}), random_normal(rng, {4, 6})};
        std::vector<double> tv{0.1, 0.4, 0.0, 0.5};
        Tensor target(Shape{4}, tv);
        double got = attention_loss(qs, ks, target, heads, 2).item();
        CHECK(std::abs(got - brute_loss(qs, ks, tv, heads)) < 1e-8);
        CHECK(got >= 0.0);
    }
}

TEST_CASE("attention loss zeros and errors") {
    Rng rng(5);
    // Zero queries give uniform maps; an all-ones mask gives a uniform target.
    TargetMap tm = target_map(Tensor(Shape{2, 4, 4}, 1.0), 2, 2);
    std::vector<Tensor> qs(3, Tensor(Shape{4, 8}, 0.0));
    std::vector<Tensor> ks{random_normal(rng, {4, 8}), random_normal(rng, {4, 8}), random_normal(rng, {4, 8})};
    CHECK(attention_loss(qs, ks, tm.normalized, 2, 3).item() == doctest::Approx(0.0).epsilon(1e-15));
    // A target equal to the response at every layer also gives zero.
    std::vector<Tensor> q1{random_normal(rng, {4, 8})};
    std::vector<Tensor> k1{random_normal(rng, {4, 8})};
    Tensor resp = response_map(cross_attention_map(q1[0], k1[0], 2));
    CHECK(attention_loss(q1, k1, resp, 2, 1).item() < 1e-30);
    std::vector<Tensor> short_q{q1[0]};
    try {
        attention_loss(short_q, ks, tm.normalized, 2, 2);
        FAIL("expected missing layer");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
}

TEST_CASE("attention loss gradient w.r.t. a query projection") {
    ModelConfig mc = tiny_model();
    mc.dit.layers = 1;
    AcdModel model(mc, 6);
    // Open the gates and LoRA so every path carries signal.
    Rng rng(7);
    for (auto& e : model.store().entries()) {
        for (double& v : e.tensor.mutable_values()) v += 0.1 * rng.normal();
    }
    VideoSample s = tiny_data(1, 8)[0];
    Tensor wq = model.dit().blocks()[0].w[0];
    Tensor lora_a = model.dit().blocks()[0].lora[0].a;
    wq.set_requires_grad(true);
    lora_a.set_requires_grad(true);
    Tensor mask = derive_mask(s.signals);
    Tensor target = target_map(mask, 2, 2).normalized;
    Tensor z0 = encode_video(s.rgb);
    Tensor zt = noise_sample(z0, normal_tensor(z0.shape(), 3), 0.4);
    Tensor zm = encode_video(apply_mask(s.rgb, mask));
    Tensor c = model.layout().encode(s.signals);
    auto loss = [&] {
        auto k = model.run(zt, 0.4, s.prompt_class, c, CaptureRole::key_stream, true, false);
        auto q = model.run(zm, 0.4, s.prompt_class, c, CaptureRole::query_stream, true, false);
        return attention_loss(q.projections, k.projections, target, mc.dit.heads, 1);
    };
    std::vector<Tensor> params{wq, lora_a};
    GradCheckResult r = grad_check(loss, params);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("mode partitions and phases") {
    AcdConfig c;
    c.max_steps = 10;
    c.mode = TrainMode::post_train;
    c.pretrain_steps = 3;
    CHECK(c.phase_at(0) == Phase::pretrain);
    CHECK(c.phase_at(2) == Phase::pretrain);
    CHECK(c.phase_at(3) == Phase::ctrl_only);
    CHECK(c.phase_at(7) == Phase::ctrl_only);
    CHECK(c.phase_at(8) == Phase::full);
    c.mode = TrainMode::ctrl_branch;
    CHECK(c.phase_at(12) == Phase::ctrl_only);
    c.mode = TrainMode::joint_train;
    CHECK(c.phase_at(3) == Phase::full);
    for (Phase p : {Phase::ctrl_only, Phase::full}) CHECK(!c.trainable(p, Partition::frozen_base));
    CHECK(!c.trainable(Phase::ctrl_only, Partition::lora));
    CHECK(!c.trainable(Phase::ctrl_only, Partition::heads));
    CHECK(c.trainable(Phase::full, Partition::lora));
    CHECK(c.trainable(Phase::full, Partition::heads));
    CHECK(c.trainable(Phase::pretrain, Partition::frozen_base));
    CHECK(!c.trainable(Phase::pretrain, Partition::controlnet));
    CHECK(c.attn_weight(Phase::ctrl_only) == 0.0);
    CHECK(c.attn_weight(Phase::full) == 1000.0);
    CHECK(parse_mode("post_train") == TrainMode::post_train);
    CHECK_THROWS(parse_mode("joint"));
    AcdConfig bad;
    bad.lambda_diff = 0.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("batch indices visit every sample once per epoch") {
    auto a = batch_indices(5, 5, 0, 9);
    std::vector<int> seen(5, 0);
    for (auto i : a) ++seen[i];
    for (int s : seen) CHECK(s == 1);
    CHECK(batch_indices(7, 3, 4, 1) == batch_indices(7, 3, 4, 1));
}

TEST_CASE("lambda_attn = 0 leaves exactly lambda_diff * L_diff") {
    ModelConfig mc = tiny_model();
    AcdModel model(mc, 10);
    auto data = tiny_data(2, 11);
    std::vector<const VideoSample*> batch{&data[0], &data[1]};
    AcdConfig c;
    c.lambda_attn = 0.0;
    c.lambda_diff = 0.7;
    TrainState st;
    StepLosses l = train_step(model, st, c, batch);
    CHECK(l.attn == 0.0);
    CHECK(l.total == doctest::Approx(0.7 * l.diff).epsilon(1e-6));
    CHECK(st.step == 1);
}

TEST_CASE("train_step is deterministic and keeps the base frozen") {
    ModelConfig mc = tiny_model();
    auto data = tiny_data(3, 12);
    std::vector<const VideoSample*> batch{&data[0], &data[1], &data[2]};
    AcdConfig c;
    c.seed = 5;
    std::vector<StepLosses> runs[2];
    std::uint64_t hashes[2][5];
    for (int r = 0; r < 2; ++r) {
        AcdModel model(mc, 13);
        const std::uint64_t base = model.store().hash(Partition::frozen_base);
        TrainState st;
        for (int i = 0; i < 3; ++i) runs[r].push_back(train_step(model, st, c, batch));
        CHECK(model.store().hash(Partition::frozen_base) == base);
        for (int p = 0; p < 5; ++p) hashes[r][p] = model.store().hash(static_cast<Partition>(p));
    }
    for (int i = 0; i < 3; ++i) {
        CHECK(runs[0][i].total == runs[1][i].total);
        CHECK(runs[0][i].diff == runs[1][i].diff);
        CHECK(runs[0][i].attn == runs[1][i].attn);
        CHECK(std::isfinite(runs[0][i].total));
        CHECK(runs[0][i].attn > 0.0);
    }
    for (int p = 0; p < 5; ++p) CHECK(hashes[0][p] == hashes[1][p]);
}

TEST_CASE("ctrl_branch touches only the branch and the layout encoders") {
    ModelConfig mc = tiny_model();
    AcdModel model(mc, 14);
    auto data = tiny_data(2, 15);
    std::vector<const VideoSample*> batch{&data[0], &data[1]};
    std::uint64_t before[5];
    for (int p = 0; p < 5; ++p) before[p] = model.store().hash(static_cast<Partition>(p));
    AcdConfig c;
    c.mode = TrainMode::ctrl_branch;
    // Give the projections a nonzero start so gradients reach the copied blocks.
    for (auto& e : model.store().entries()) {
        if (e.partition == Partition::heads && e.name.find("out_head.w") != std::string::npos) {
            for (double& v : e.tensor.mutable_values()) v = 0.01;
        }
    }
    before[static_cast<int>(Partition::heads)] = model.store().hash(Partition::heads);
    TrainState st;
    for (int i = 0; i < 2; ++i) CHECK(train_step(model, st, c, batch).attn == 0.0);
    CHECK(model.store().hash(Partition::frozen_base) == before[0]);
    CHECK(model.store().hash(Partition::lora) == before[2]);
    CHECK(model.store().hash(Partition::heads) == before[4]);
    CHECK(model.store().hash(Partition::controlnet) != before[1]);
    CHECK(model.store().hash(Partition::layout_enc) != before[3]);
}

TEST_CASE("empty-mask samples are skipped") {
    ModelConfig mc = tiny_model();
    AcdModel model(mc, 16);
    auto data = tiny_data(1, 17);
    VideoSample empty = data[0];
    empty.signals.mask = Tensor(empty.signals.mask.shape(), 0.0);
    std::vector<const VideoSample*> batch{&data[0], &empty};
    AcdConfig c;
    TrainState st;
    StepLosses l = train_step(model, st, c, batch);
    CHECK(l.used == 1);
    CHECK(l.skipped == 1);
    std::vector<const VideoSample*> only_empty{&empty};
    StepLosses z = train_step(model, st, c, only_empty);
    CHECK(z.used == 0);
    CHECK(st.step == 2);
}

TEST_CASE("run_training log, checkpoints and bit-exact resume") {
    ModelConfig mc = tiny_model();
    auto data = tiny_data(4, 18);
    AcdConfig c;
    c.mode = TrainMode::post_train;
    c.pretrain_steps = 2;
    c.max_steps = 4;
    c.batch_size = 2;
    c.checkpoint_every = 3;
    c.seed = 21;
    fs::path a = fs::temp_directory_path() / "acd_run_a";
    fs::path b = fs::temp_directory_path() / "acd_run_b";
    fs::remove_all(a);
    fs::remove_all(b);
    RunOptions oa;
    oa.out_dir = a;
    oa.extra_files["config.txt"] = "dim=12\n";
    RunSummary sa;
    {
        AcdModel model(mc, 19);
        sa = run_training(model, data, c, oa);
    }
    CHECK(sa.steps == 6);
    CHECK(sa.base_hash_start == sa.base_hash_end);
    CHECK(fs::exists(a / "step_000003" / "params.idx"));
    CHECK(fs::exists(a / "step_000003" / "optim" / "params.idx"));
    CHECK(fs::exists(a / "final" / "config.txt"));
    auto log = read_lines(a / "log.csv");
    REQUIRE(log.size() == 7);
    CHECK(log[0] == "step,L,L_diff,L_attn,wall_ms");
    // Pretrain and post-train phase 1 carry no attention term.
    for (int i = 1; i <= 4; ++i) CHECK(log[i].find(",0,") != std::string::npos);

    RunOptions ob;
    ob.out_dir = b;
    ob.resume_from = a / "step_000003";
    ob.extra_files = oa.extra_files;
    fs::create_directories(b);
    fs::copy_file(a / "log.csv", b / "log.csv");
    {
        AcdModel model(mc, 999);  // weights all come from the checkpoint
        run_training(model, data, c, ob);
    }
    auto logb = read_lines(b / "log.csv");
    REQUIRE(logb.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) CHECK(drop_wall(logb[i]) == drop_wall(log[i]));
    for (const auto& e : fs::directory_iterator(a / "final")) {
        if (!e.is_regular_file()) continue;
        std::ifstream x(e.path(), std::ios::binary), y(b / "final" / e.path().filename(), std::ios::binary);
        std::stringstream sx, sy;
        sx << x.rdbuf();
        sy << y.rdbuf();
        CHECK_MESSAGE(sx.str() == sy.str(), e.path().filename().string());
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("init checkpoint seeds base and branch copies") {
    ModelConfig mc = tiny_model();
    fs::path d = fs::temp_directory_path() / "acd_init_ckpt";
    fs::remove_all(d);
    AcdModel src(mc, 30);
    for (auto& e : src.store().entries()) {
        if (e.partition == Partition::frozen_base) e.tensor.mutable_values()[0] += 0.5;
    }
    save_checkpoint(d, src, TrainState{}, {});
    AcdModel dst(mc, 31);
    AcdConfig c;
    c.max_steps = 0;
    RunOptions o;
    o.out_dir = d / "run";
    o.init_ckpt = d;
    auto data = tiny_data(1, 32);
    run_training(dst, data, c, o);
    CHECK(dst.store().hash(Partition::frozen_base) == src.store().hash(Partition::frozen_base));
    CHECK(bit_equal(dst.controlnet().blocks()[0].w[0], src.dit().blocks()[0].w[0]));
    CHECK(dst.store().hash(Partition::layout_enc) != src.store().hash(Partition::layout_enc));
    fs::remove_all(d);
}

TEST_CASE("missing checkpoint tensors are listed") {
    ModelConfig mc = tiny_model();
    fs::path d = fs::temp_directory_path() / "acd_missing_ckpt";
    fs::remove_all(d);
    AcdModel m(mc, 1);
    save_checkpoint(d, m, TrainState{}, {});
    fs::remove(d / "lora.blocks.1.v.a.acdt");
    {
        auto files = read_manifest(d);
        std::vector<TensorFile> keep;
        for (auto& f : files)
            if (f.name != "lora.blocks.1.v.a") keep.push_back(f);
        write_manifest(d, keep);
    }
    try {
        load_checkpoint(d, m, nullptr);
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("lora.blocks.1.v.a") != std::string::npos);
    }
    fs::remove_all(d);
}

TEST_CASE("attention alignment is deterministic") {
    ModelConfig mc = tiny_model();
    AcdModel m(mc, 40);
    auto data = tiny_data(1, 41);
    double a = attention_alignment(m, data[0], 0.3, 7);
    double b = attention_alignment(m, data[0], 0.3, 7);
    CHECK(a == b);
    CHECK(a >= 0.0);
}
