#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace jumpdrift {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based seed derivation: the same (master, path of counters) always
/// gives the same child seed, independent of scheduling order.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> counters) {
    std::uint64_t s = splitmix64(master);
    for (auto c : counters) s = splitmix64(s ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    return s;
}

/// Stream ids used by the simulator so that Brownian and jump draws never share an engine.
enum class Stream : std::uint64_t { Initial = 1, Brownian = 2, Jumps = 3 };

inline Rng make_rng(std::uint64_t seed, Stream stream) {
    return Rng(derive_seed(seed, {static_cast<std::uint64_t>(stream)}));
}

}  // namespace jumpdrift
