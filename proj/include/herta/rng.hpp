#pragma once

#include <cstdint>
#include <random>

namespace herta {

/// Seed-addressed random source. Each consumer asks for its own numbered
/// substream, so adding draws in one stage never shifts another stage.
class RngHandle {
public:
    explicit RngHandle(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Child handle whose seed is a hash of (seed, stream).
    RngHandle substream(std::uint64_t stream) const {
        return RngHandle(mix(seed_ ^ mix(stream + 0x632be59bd9b4e019ULL)));
    }

    std::mt19937_64 engine() const { return std::mt19937_64(mix(seed_)); }

    static std::uint64_t mix(std::uint64_t z) noexcept {
        // SplitMix64 finalizer.
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
};

// Substream ids used across the library.
namespace streams {
inline constexpr std::uint64_t sketch_edges = 1;
inline constexpr std::uint64_t sketch_nodes = 2;
inline constexpr std::uint64_t edge_sampling = 3;
inline constexpr std::uint64_t srht_signs = 4;
inline constexpr std::uint64_t srht_rows = 5;
inline constexpr std::uint64_t sparsifier = 10;
inline constexpr std::uint64_t preconditioner = 11;
} // namespace streams

} // namespace herta
