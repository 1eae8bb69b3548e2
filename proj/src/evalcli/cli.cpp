// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "acd/acdt.hpp"
#include "acd/evalcli.hpp"

namespace acd {

namespace fs = std::filesystem;

namespace {

struct Args {
    // gen-data
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out;
    // train
    std::string config, data, resume;
    std::vector<std::string> overrides;
    // sample / eval
    std::string ckpt, layout;
    std::size_t steps = 0;
    double cfg_scale = 0.0;
    bool bypass = false;
    // grad-check / validate-data
    std::string module = "all";
    std::string dir;
};

int gen_data(const Args& a, std::ostream& out) {
    write_dataset(a.n, a.out, a.seed);
    out << "wrote " << a.n << " samples to " << a.out << "\n";
    return 0;
}

int train(const Args& a, std::ostream& out, std::ostream& err) {
    RunConfig cfg = a.config.empty() ? RunConfig() : RunConfig::load(a.config);
    for (const std::string& kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    const ModelConfig mc = cfg.model();
    const AcdConfig tc = cfg.train();
    const auto samples = read_dataset(a.data);
    if (samples.empty()) throw std::runtime_error("train: dataset " + a.data + " is empty");
    std::vector<VideoSample> data;
    std::string seeds;
    for (const Sample& s : samples) {
        data.push_back(s.data);
        seeds += std::to_string(s.scene.seed) + "\n";
    }
    RunOptions opts;
    opts.out_dir = a.out;
    opts.resume_from = a.resume;
    opts.init_ckpt = cfg.get("init_ckpt");
    opts.quiet = cfg.flag("quiet");
    opts.extra_files["config.txt"] = cfg.to_text();
    opts.extra_files["data_seeds.txt"] = seeds;
    fs::create_directories(opts.out_dir);
    {
        std::ofstream os(opts.out_dir / "config.txt", std::ios::binary | std::ios::trunc);
        os << cfg.to_text();
    }
    AcdModel model(mc, cfg.seed("model_seed"));
    (void)err;
    RunSummary s = run_training(model, data, tc, opts);
    out << "steps " << s.steps << "\n";
    if (s.skipped_samples) out << "skipped_samples " << s.skipped_samples << "\n";
    out << "final " << s.final_ckpt.string() << "\n";
    return 0;
}

int sample_cmd(const Args& a, std::ostream& out) {
    auto model = load_model(a.ckpt);
    const fs::path cfg_path = fs::path(a.ckpt) / "config.txt";
    RunConfig cfg = fs::exists(cfg_path) ? RunConfig::load(cfg_path) : RunConfig();
    SamplerConfig sc = cfg.sampler();
    if (a.steps) sc.steps = a.steps;
    if (a.cfg_scale != 0.0) sc.cfg_scale = a.cfg_scale;
    sc.validate();
    Sample layout = read_sample(a.layout);
    validate_signals(layout.data.signals, model->config().layout.num_categories);
    Tensor video = generate_video(*model, layout.data, sc, a.seed);
    fs::create_directories(a.out);
    save_acdt(fs::path(a.out) / "video.acdt", video);
    for (std::size_t f = 0; f < video.dim(0); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%02zu.ppm", f);
        write_ppm(fs::path(a.out) / name, video, f);
    }
    out << "wrote " << video.dim(0) << " frames to " << a.out << "\n";
    return 0;
}

int eval_cmd(const Args& a, std::ostream& out, bool seed_given) {
    const fs::path cfg_path = fs::path(a.ckpt) / "config.txt";
    RunConfig cfg = fs::exists(cfg_path) ? RunConfig::load(cfg_path) : RunConfig();
    EvalOptions opts;
    opts.sampler = cfg.sampler();
    opts.seed = seed_given ? a.seed : cfg.seed("eval_seed");
    opts.bypass_sampling = a.bypass;
    const auto samples = read_dataset(a.data);
    EvalReport r = eval_checkpoint(a.ckpt, samples, opts);
    write_report(r, a.out);
    out << r.summary() << "wall_ms " << r.wall_ms << "\n";
    return 0;
}

int grad_check_cmd(const Args& a, std::ostream& out) {
    bool ok = true;
    for (const GradCheckLine& l : run_grad_checks(a.module, a.seed)) {
        const bool pass = l.max_rel_error < kGradTolerance;
        ok = ok && pass;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-10s %-22s max_rel_err %.3e %s\n", l.module.c_str(), l.name.c_str(),
                      l.max_rel_error, pass ? "ok" : "FAIL");
        out << buf;
    }
    return ok ? 0 : 2;
}

int validate_cmd(const Args& a, std::ostream& out, std::ostream& err) {
    auto problems = validate_dataset(a.dir);
    for (const auto& p : problems) err << p << "\n";
    if (!problems.empty()) return 2;
    out << "ok " << read_dataset(a.dir).size() << " samples\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Attention-conditional video diffusion at desk scale", "acd"};
    app.require_subcommand(1);
    Args a;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--n", a.n, "number of samples")->required();
    gen->add_option("--seed", a.seed, "dataset seed");
    gen->add_option("--out", a.out, "output directory")->required();

    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", a.config, "key=value run config");
    tr->add_option("--set", a.overrides, "override one config key, key=value");
    tr->add_option("--data", a.data, "dataset directory")->required();
    tr->add_option("--out", a.out, "run directory")->required();
    tr->add_option("--resume", a.resume, "checkpoint to resume from");

    auto* sm = app.add_subcommand("sample", "generate a video for one layout");
    sm->add_option("--ckpt", a.ckpt, "checkpoint directory")->required();
    sm->add_option("--layout", a.layout, "sample directory providing the layout")->required();
    sm->add_option("--seed", a.seed, "noise seed");
    sm->add_option("--steps", a.steps, "Euler steps (config default)");
    sm->add_option("--cfg-scale", a.cfg_scale, "guidance scale (config default)");
    sm->add_option("--out", a.out, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    ev->add_option("--ckpt", a.ckpt, "checkpoint directory")->required();
    ev->add_option("--data", a.data, "evaluation dataset")->required();
    ev->add_option("--out", a.out, "report directory")->required();
    auto* ev_seed = ev->add_option("--seed", a.seed, "evaluation seed (config default)");
    ev->add_flag("--bypass-sampling", a.bypass, "score ground truth against itself");

    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient checks");
    gc->add_option("--module", a.module, "all, tensorcore, flow, layout, dit, controlnet or acd");
    gc->add_option("--seed", a.seed, "seed for the random inputs");

    auto* vd = app.add_subcommand("validate-data", "check a dataset directory");
    vd->add_option("--dir", a.dir, "dataset directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*gen) return gen_data(a, out);
        if (*tr) return train(a, out, err);
        if (*sm) return sample_cmd(a, out);
        if (*ev) return eval_cmd(a, out, ev_seed->count() > 0);
        if (*gc) return grad_check_cmd(a, out);
        if (*vd) return validate_cmd(a, out, err);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace acd
