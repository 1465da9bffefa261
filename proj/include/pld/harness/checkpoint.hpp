#pragma once
// Checkpoint file: a flat, versioned binary of named parameter arrays plus the
// configuration text. All integers and doubles are little-endian.
//
//   magic    8 bytes  "PLDCKPT\0"
//   version  u32      1
//   kind     u32 length + bytes   e.g. "planning/parsimony"
//   config   u64 length + bytes   the config snapshot
//   count    u32
//   count x  { u32 name length + bytes, u32 rows, u32 cols, rows*cols f64 row-major }

#include "pld/diffmath.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pld {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'P', 'L', 'D', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    std::string kind;
    std::string config;
    std::vector<std::pair<std::string, Matrix>> arrays;
};

namespace detail {

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("checkpoint: truncated file");
    return v;
}

inline std::string get_string(std::istream& in, std::uint64_t n) {
    if (n > (1ull << 32)) throw CheckpointError("checkpoint: implausible string length");
    std::string s(n, '\0');
    if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("checkpoint: truncated file");
    return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& c) {
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.kind.size()));
    out.write(c.kind.data(), static_cast<std::streamsize>(c.kind.size()));
    detail::put<std::uint64_t>(out, c.config.size());
    out.write(c.config.data(), static_cast<std::streamsize>(c.config.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.arrays.size()));
    for (const auto& [name, m] : c.arrays) {
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) detail::put<double>(out, m(i, j));
    }
    if (!out) throw CheckpointError("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw CheckpointError("checkpoint: bad magic");
    const auto version = detail::get<std::uint32_t>(in);
    if (version != kCheckpointVersion) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    c.kind = detail::get_string(in, detail::get<std::uint32_t>(in));
    c.config = detail::get_string(in, detail::get<std::uint64_t>(in));
    const auto count = detail::get<std::uint32_t>(in);
    for (std::uint32_t k = 0; k < count; ++k) {
        std::string name = detail::get_string(in, detail::get<std::uint32_t>(in));
        const auto rows = detail::get<std::uint32_t>(in);
        const auto cols = detail::get<std::uint32_t>(in);
        Matrix m(rows, cols);
        for (std::uint32_t i = 0; i < rows; ++i)
            for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = detail::get<double>(in);
        c.arrays.emplace_back(std::move(name), std::move(m));
    }
    return c;
}

inline Checkpoint make_checkpoint(std::string kind, std::string config, const std::vector<Parameter*>& params) {
    Checkpoint c{std::move(kind), std::move(config), {}};
    for (const Parameter* p : params) c.arrays.emplace_back(p->name, p->value);
    return c;
}

/// Copies arrays into parameters, matched by position, name and shape.
inline void restore_parameters(const Checkpoint& c, const std::vector<Parameter*>& params) {
    if (c.arrays.size() != params.size()) throw CheckpointError("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, m] = c.arrays[i];
        if (name != params[i]->name) throw CheckpointError("checkpoint: expected '" + params[i]->name + "', found '" + name + "'");
        if (m.rows() != params[i]->value.rows() || m.cols() != params[i]->value.cols())
            throw CheckpointError("checkpoint: shape mismatch for '" + name + "'");
    }
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = c.arrays[i].second;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write '" + path + "'");
    write_checkpoint(out, c);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read '" + path + "'");
    return read_checkpoint(in);
}

}  // namespace pld
