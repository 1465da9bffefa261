#pragma once
// Named random streams derived from one master seed. A stream's seed is
// splitmix64(master ^ fnv1a(name)), so adding a stream never perturbs the
// others and names stay meaningful across versions.
//
// Streams in use: env, init, action, replay, noise, cem, tasks, explore.

#include "pld/diffmath/tape.hpp"

#include <cstdint>
#include <string_view>

namespace pld {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::string_view name) { return splitmix64(master ^ fnv1a(name)); }

class SeedStreams {
public:
    explicit SeedStreams(std::uint64_t master) : master_(master) {}

    std::uint64_t master() const { return master_; }
    std::uint64_t seed(std::string_view name) const { return stream_seed(master_, name); }
    Rng stream(std::string_view name) const { return Rng(seed(name)); }

private:
    std::uint64_t master_;
};

}  // namespace pld
