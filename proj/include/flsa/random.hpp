#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

// Seeding and draws that do not depend on the standard library's
// distribution implementations, so streams match across toolchains.
namespace flsa {

// Generator keyed by a tuple of 64-bit parts (seed, stream tag, indices...).
inline std::mt19937_64 seeded_rng(std::initializer_list<std::uint64_t> parts) {
    std::vector<std::uint32_t> words;
    words.reserve(parts.size() * 2);
    for (auto p : parts) {
        words.push_back(static_cast<std::uint32_t>(p & 0xFFFFFFFFu));
        words.push_back(static_cast<std::uint32_t>(p >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

// Uniform in [0, 1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Uniform in [0, n) by rejection; n must be positive.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return static_cast<std::size_t>(x % bound);
}

}  // namespace flsa
