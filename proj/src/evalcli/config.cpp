// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "acd/evalcli.hpp"

namespace acd {

namespace {

constexpr std::array<ConfigKey, 37> kKeys{{
    {"frames", "8", ConfigKey::integer, "video frames T"},
    {"height", "16", ConfigKey::integer, "frame height"},
    {"width", "16", ConfigKey::integer, "frame width"},
    {"channels", "3", ConfigKey::integer, "color channels"},
    {"patch_t", "2", ConfigKey::integer, "latent patch size over time"},
    {"patch_s", "2", ConfigKey::integer, "latent patch size over space"},
    {"dim", "32", ConfigKey::integer, "transformer width d"},
    {"heads", "4", ConfigKey::integer, "attention heads"},
    {"layers", "4", ConfigKey::integer, "transformer blocks"},
    {"ffn_mult", "4", ConfigKey::integer, "feed-forward expansion"},
    {"lora_rank", "4", ConfigKey::integer, "LoRA rank r"},
    {"lora_alpha", "8", ConfigKey::real, "LoRA alpha"},
    {"num_classes", "5", ConfigKey::integer, "prompt classes and semantic categories"},
    {"ctrl_blocks", "2", ConfigKey::integer, "ControlNet blocks N_c"},
    {"lift_channels", "8", ConfigKey::integer, "layout encoder channels"},
    {"use_depth", "1", ConfigKey::flag, "depth layout encoder on"},
    {"use_semantic", "1", ConfigKey::flag, "semantic layout encoder on"},
    {"mode", "joint_train", ConfigKey::mode, "ctrl_branch, post_train or joint_train"},
    {"lambda_diff", "1", ConfigKey::real, "weight of L_diff"},
    {"lambda_attn", "1000", ConfigKey::real, "weight of L_attn"},
    {"lr", "0.001", ConfigKey::real, "Adam learning rate"},
    {"beta1", "0.9", ConfigKey::real, "Adam beta1"},
    {"beta2", "0.999", ConfigKey::real, "Adam beta2"},
    {"adam_eps", "1e-8", ConfigKey::real, "Adam epsilon"},
    {"steps", "500", ConfigKey::integer, "attention-conditional training steps"},
    {"pretrain_steps", "0", ConfigKey::integer, "base-model steps before them"},
    {"batch_size", "4", ConfigKey::integer, "samples per step"},
    {"cfg_dropout", "0.1", ConfigKey::real, "probability of dropping the conditions"},
    {"post_train_split", "0.5", ConfigKey::real, "post_train: fraction of steps without L_attn"},
    {"checkpoint_every", "0", ConfigKey::integer, "periodic checkpoint interval, 0 = final only"},
    {"model_seed", "0", ConfigKey::integer, "parameter initialization seed"},
    {"train_seed", "0", ConfigKey::integer, "batch order, t, noise and dropout seed"},
    {"init_ckpt", "", ConfigKey::text, "checkpoint providing base and heads, optional"},
    {"sample_steps", "50", ConfigKey::integer, "Euler steps S"},
    {"cfg_scale", "6", ConfigKey::real, "guidance scale w"},
    {"eval_seed", "0", ConfigKey::integer, "sampling and metric noise seed"},
    {"quiet", "0", ConfigKey::flag, "suppress training progress"},
}};

const ConfigKey* find_key(const std::string& name) {
    for (const ConfigKey& k : kKeys)
        if (name == k.name) return &k;
    return nullptr;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool parse_int(const std::string& v, std::int64_t& out) {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    return ec == std::errc() && p == v.data() + v.size();
}

bool parse_real(const std::string& v, double& out) {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    return ec == std::errc() && p == v.data() + v.size();
}

void check_value(const ConfigKey& k, const std::string& v) {
    std::int64_t i = 0;
    double d = 0.0;
    bool ok = true;
    switch (k.kind) {
        case ConfigKey::integer: ok = parse_int(v, i) && i >= 0; break;
        case ConfigKey::real: ok = parse_real(v, d); break;
        case ConfigKey::flag: ok = v == "0" || v == "1"; break;
        case ConfigKey::mode:
            try {
                parse_mode(v);
            } catch (const std::exception&) {
                ok = false;
            }
            break;
        case ConfigKey::text: break;
    }
    if (!ok) throw ConfigError("config: bad value '" + v + "' for " + k.name + " (" + k.doc + ")");
}

}  // namespace

RunConfig::RunConfig() {
    for (const ConfigKey& k : kKeys) values_[k.name] = k.default_value;
}

std::span<const ConfigKey> RunConfig::keys() { return kKeys; }

RunConfig RunConfig::parse(std::string_view text) {
    RunConfig c;
    std::map<std::string, std::size_t> seen;
    std::istringstream is{std::string(text)};
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key=value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (!find_key(key)) throw ConfigError("config line " + std::to_string(n) + ": unknown key '" + key + "'");
        if (auto [it, fresh] = seen.emplace(key, n); !fresh) {
            throw ConfigError("config line " + std::to_string(n) + ": duplicate key '" + key + "' (first at line " +
                              std::to_string(it->second) + ")");
        }
        c.set(key, value);
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("config: cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const ConfigKey* k = find_key(key);
    if (!k) throw ConfigError("config: unknown key '" + key + "'");
    check_value(*k, value);
    values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second;
}

double RunConfig::real(const std::string& key) const {
    double d = 0.0;
    parse_real(get(key), d);
    return d;
}

std::int64_t RunConfig::integer(const std::string& key) const {
    std::int64_t i = 0;
    parse_int(get(key), i);
    return i;
}

std::uint64_t RunConfig::seed(const std::string& key) const { return static_cast<std::uint64_t>(integer(key)); }

bool RunConfig::flag(const std::string& key) const { return get(key) == "1"; }

std::string RunConfig::to_text() const {
    std::string out;
    for (const ConfigKey& k : kKeys) out += std::string(k.name) + "=" + values_.at(k.name) + "\n";
    return out;
}

ModelConfig RunConfig::model() const {
    auto u = [&](const char* k) { return static_cast<std::size_t>(integer(k)); };
    ModelConfig m;
    m.frames = u("frames");
    m.height = u("height");
    m.width = u("width");
    m.channels = u("channels");
    m.codec.patch_t = u("patch_t");
    m.codec.patch_s = u("patch_s");
    m.ctrl_blocks = u("ctrl_blocks");
    m.dit.dim = u("dim");
    m.dit.heads = u("heads");
    m.dit.layers = u("layers");
    m.dit.ffn_mult = u("ffn_mult");
    m.dit.lora_rank = u("lora_rank");
    m.dit.lora_alpha = real("lora_alpha");
    m.dit.num_classes = u("num_classes");
    m.dit.latent_channels = m.codec.patch_t * m.codec.patch_s * m.codec.patch_s * m.channels;
    if (m.codec.patch_t && m.codec.patch_s) {
        m.dit.max_tokens = (m.frames / m.codec.patch_t) * (m.height / m.codec.patch_s) * (m.width / m.codec.patch_s);
    }
    m.layout.dim = m.dit.dim;
    m.layout.lift_channels = u("lift_channels");
    m.layout.num_categories = m.dit.num_classes;
    m.layout.patch_t = m.codec.patch_t;
    m.layout.patch_s = m.codec.patch_s;
    m.layout.use_depth = flag("use_depth");
    m.layout.use_semantic = flag("use_semantic");
    m.validate();
    return m;
}

AcdConfig RunConfig::train() const {
    AcdConfig c;
    c.lambda_diff = real("lambda_diff");
    c.lambda_attn = real("lambda_attn");
    c.mode = parse_mode(get("mode"));
    c.lr = real("lr");
    c.beta1 = real("beta1");
    c.beta2 = real("beta2");
    c.adam_eps = real("adam_eps");
    c.max_steps = static_cast<std::size_t>(integer("steps"));
    c.pretrain_steps = static_cast<std::size_t>(integer("pretrain_steps"));
    c.batch_size = static_cast<std::size_t>(integer("batch_size"));
    c.seed = seed("train_seed");
    c.cfg_dropout = real("cfg_dropout");
    c.post_train_split = real("post_train_split");
    c.checkpoint_every = static_cast<std::size_t>(integer("checkpoint_every"));
    c.validate();
    return c;
}

SamplerConfig RunConfig::sampler() const {
    SamplerConfig s;
    s.steps = static_cast<std::size_t>(integer("sample_steps"));
    s.cfg_scale = real("cfg_scale");
    s.validate();
    return s;
}

}  // namespace acd
