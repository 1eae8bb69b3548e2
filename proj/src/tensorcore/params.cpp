// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/params.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

#include "acd/acdt.hpp"

namespace acd {

std::string_view partition_prefix(Partition p) {
    switch (p) {
        case Partition::frozen_base: return "base";
        case Partition::controlnet: return "ctrl";
        case Partition::lora: return "lora";
        case Partition::layout_enc: return "layout";
        case Partition::heads: return "heads";
    }
    return "unknown";
}

Tensor ParamStore::add(Partition p, const std::string& local_name, Tensor t) {
    std::string name = std::string(partition_prefix(p)) + "." + local_name;
    if (find(name)) {
        throw std::invalid_argument("params: duplicate parameter " + name);
    }
    if (!t.is_leaf()) {
        throw std::invalid_argument("params: " + name + " must be a leaf tensor");
    }
    entries_.push_back({std::move(name), t, p});
    return t;
}

const ParamEntry* ParamStore::find(std::string_view name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

std::size_t ParamStore::count(Partition p) const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.partition == p;
    return n;
}

std::size_t ParamStore::numel(Partition p) const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        if (e.partition == p) n += e.tensor.numel();
    }
    return n;
}

std::uint64_t ParamStore::hash(Partition p) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 0x100000001b3ull;
    };
    for (const auto& e : entries_) {
        if (e.partition != p) continue;
        for (char c : e.name) mix(static_cast<unsigned char>(c));
        for (double v : e.tensor.values()) {
            auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int i = 0; i < 4; ++i) mix(static_cast<unsigned char>(bits >> (8 * i)));
        }
    }
    return h;
}

void ParamStore::set_requires_grad(const std::function<bool(Partition)>& trainable) {
    for (auto& e : entries_) {
        e.tensor.set_requires_grad(trainable(e.partition));
        e.tensor.clear_grad();
    }
}

void ParamStore::zero_grads() {
    for (auto& e : entries_) e.tensor.clear_grad();
}

Tensor init_normal(Rng& rng, Shape shape, double stddev) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = round_to(rng.normal() * stddev, Precision::f32);
    return Tensor(std::move(shape), std::move(v));
}

Tensor init_zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }

namespace {

std::string shape_token(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(s[i]);
    }
    return out;
}

Shape parse_shape_token(const std::string& tok) {
    Shape s;
    std::stringstream ss(tok);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        s.push_back(static_cast<std::size_t>(std::stoull(part)));
    }
    return s;
}

}  // namespace

void write_manifest(const std::filesystem::path& dir, const std::vector<TensorFile>& files) {
    std::ofstream os(dir / "params.idx", std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + (dir / "params.idx").string());
    for (const auto& f : files) {
        os << f.name << ' ' << f.file << ' ' << shape_token(f.shape) << '\n';
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + (dir / "params.idx").string());
}

std::vector<TensorFile> read_manifest(const std::filesystem::path& dir) {
    std::ifstream is(dir / "params.idx");
    if (!is) throw std::runtime_error("checkpoint: missing manifest " + (dir / "params.idx").string());
    std::vector<TensorFile> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        TensorFile f;
        std::string shape;
        if (!(ls >> f.name >> f.file >> shape)) {
            throw std::runtime_error("checkpoint: malformed manifest line: " + line);
        }
        f.shape = parse_shape_token(shape);
        out.push_back(std::move(f));
    }
    return out;
}

void save_params(const std::filesystem::path& dir, const ParamStore& store,
                 const std::function<bool(const ParamEntry&)>& filter) {
    std::filesystem::create_directories(dir);
    std::vector<TensorFile> files;
    for (const auto& e : store.entries()) {
        if (filter && !filter(e)) continue;
        TensorFile f{e.name, e.name + ".acdt", e.tensor.shape()};
        save_acdt(dir / f.file, e.tensor);
        files.push_back(std::move(f));
    }
    write_manifest(dir, files);
}

void load_params(const std::filesystem::path& dir, ParamStore& store,
                 const std::function<bool(const ParamEntry&)>& filter) {
    std::map<std::string, TensorFile> by_name;
    for (auto& f : read_manifest(dir)) by_name.emplace(f.name, f);
    std::vector<std::string> missing;
    for (auto& e : store.entries()) {
        if (filter && !filter(e)) continue;
        auto it = by_name.find(e.name);
        if (it == by_name.end()) {
            missing.push_back(e.name);
            continue;
        }
        if (it->second.shape != e.tensor.shape()) {
            throw ShapeError("checkpoint: " + e.name + " has shape " + to_string(it->second.shape) +
                             ", model expects " + to_string(e.tensor.shape()));
        }
        Tensor t = load_acdt(dir / it->second.file);
        if (t.shape() != e.tensor.shape()) {
            throw ShapeError("checkpoint: file for " + e.name + " has shape " + to_string(t.shape()));
        }
        auto dst = e.tensor.mutable_values();
        auto src = t.values();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    if (!missing.empty()) {
        std::string msg = "checkpoint: missing tensors in " + dir.string() + ":";
        for (const auto& m : missing) msg += " " + m;
        throw std::runtime_error(msg);
    }
}

}  // namespace acd
