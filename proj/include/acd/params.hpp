// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named parameter registry and the checkpoint directory format: one ACDT file
// per parameter plus a `params.idx` manifest with lines "name file shape",
// shape written as extents joined by 'x' (e.g. 32x96).

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "acd/rng.hpp"
#include "acd/tensor.hpp"

namespace acd {

enum class Partition : std::uint8_t { frozen_base, controlnet, lora, layout_enc, heads };

std::string_view partition_prefix(Partition p);

struct ParamEntry {
    std::string name;  // includes the partition prefix, e.g. "base.blocks.0.wq"
    Tensor tensor;
    Partition partition;
};

class ParamStore {
public:
    // Registers a leaf tensor under "<prefix>.<local_name>" and returns the
    // shared handle; the store and the caller see the same storage.
    Tensor add(Partition p, const std::string& local_name, Tensor t);

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::vector<ParamEntry>& entries() { return entries_; }
    const ParamEntry* find(std::string_view name) const;
    std::size_t count(Partition p) const;
    std::size_t numel(Partition p) const;

    // FNV-1a over names and float32 bytes of one partition.
    std::uint64_t hash(Partition p) const;

    void set_requires_grad(const std::function<bool(Partition)>& trainable);
    void zero_grads();

private:
    std::vector<ParamEntry> entries_;
};

// Initializers. Values are rounded to float32 so checkpoints restore them exactly.
Tensor init_normal(Rng& rng, Shape shape, double stddev);
Tensor init_zeros(Shape shape);

struct TensorFile {
    std::string name;
    std::string file;
    Shape shape;
};

void write_manifest(const std::filesystem::path& dir, const std::vector<TensorFile>& files);
std::vector<TensorFile> read_manifest(const std::filesystem::path& dir);

// Writes every parameter accepted by `filter` (all when empty).
void save_params(const std::filesystem::path& dir, const ParamStore& store,
                 const std::function<bool(const ParamEntry&)>& filter = {});

// Loads values for every parameter accepted by `filter`. Parameters missing
// from the checkpoint raise an error listing all missing names; shape
// mismatches are errors too.
void load_params(const std::filesystem::path& dir, ParamStore& store,
                 const std::function<bool(const ParamEntry&)>& filter = {});

}  // namespace acd
