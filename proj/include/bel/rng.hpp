#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bel {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer. Bijective on 64-bit words.
[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a path of tags
/// (purpose, grid index, replicate index, ...). The result depends only on
/// the inputs, never on scheduling.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t master,
                                                  std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t tag : path) h = splitmix64(h ^ splitmix64(tag + 0x632BE59BD9B4E019ull));
    return h;
}

// Stream purposes, mixed into derive_seed paths.
namespace stream {
inline constexpr std::uint64_t replicate = 1;
inline constexpr std::uint64_t sigma2 = 2;
inline constexpr std::uint64_t mean = 3;
inline constexpr std::uint64_t coefficients = 4;
inline constexpr std::uint64_t smoothing = 5;
inline constexpr std::uint64_t series = 6;
inline constexpr std::uint64_t diagnostic = 7;
}  // namespace stream

[[nodiscard]] inline Engine make_engine(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Engine(seq);
}

}  // namespace bel
