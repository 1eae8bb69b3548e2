// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// ACDT tensor files: "ACDT", u32 version (1), u32 ndim, ndim x u32 extents,
// then the row-major payload as little-endian float32. All integers are
// little-endian.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "acd/tensor.hpp"

namespace acd {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kAcdtVersion = 1;

void write_acdt(std::ostream& os, const Tensor& t);
Tensor read_acdt(std::istream& is);

void save_acdt(const std::filesystem::path& path, const Tensor& t);
Tensor load_acdt(const std::filesystem::path& path);

}  // namespace acd
