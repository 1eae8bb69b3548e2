// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/acdt.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace acd {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    is.read(reinterpret_cast<char*>(b.data()), 4);
    if (!is) throw FormatError("acdt: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_acdt(std::ostream& os, const Tensor& t) {
    os.write("ACDT", 4);
    put_u32(os, kAcdtVersion);
    const Shape& s = t.shape();
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    for (std::size_t e : s) {
        if (e > std::numeric_limits<std::uint32_t>::max()) throw FormatError("acdt: extent too large");
        put_u32(os, static_cast<std::uint32_t>(e));
    }
    for (double v : t.values()) {
        put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    if (!os) throw FormatError("acdt: write failed");
}

Tensor read_acdt(std::istream& is) {
    std::array<char, 4> magic{};
    is.read(magic.data(), 4);
    if (!is || std::memcmp(magic.data(), "ACDT", 4) != 0) throw FormatError("acdt: bad magic");
    std::uint32_t version = get_u32(is);
    if (version != kAcdtVersion) throw FormatError("acdt: unsupported version " + std::to_string(version));
    std::uint32_t ndim = get_u32(is);
    if (ndim > 16) throw FormatError("acdt: implausible rank " + std::to_string(ndim));
    Shape shape;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        std::uint32_t e = get_u32(is);
        if (e == 0) throw FormatError("acdt: zero extent");
        shape.push_back(e);
    }
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) {
        v = static_cast<double>(std::bit_cast<float>(get_u32(is)));
    }
    return Tensor(std::move(shape), std::move(values));
}

void save_acdt(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("acdt: cannot open " + path.string() + " for writing");
    write_acdt(os, t);
    os.flush();
    if (!os) throw FormatError("acdt: write failed for " + path.string());
}

Tensor load_acdt(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("acdt: cannot open " + path.string());
    try {
        return read_acdt(is);
    } catch (const FormatError& e) {
        throw FormatError(std::string(e.what()) + " in " + path.string());
    }
}

}  // namespace acd
