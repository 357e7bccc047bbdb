#pragma once

#include <array>
#include <cstdint>

namespace bvae {

/// Philox4x32-10 block function. Stateless: every output is a pure function
/// of (key, counter), so draws can be made in any order or in parallel.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t key)
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

    Block operator()(Block counter) const;

private:
    std::array<std::uint32_t, 2> key_;
};

/// Mixes an arbitrary number of words into one 64-bit seed (splitmix64 chain).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t seed, Tags... tags) {
    ((seed = mix_seed(seed, static_cast<std::uint64_t>(tags))), ...);
    return seed;
}

/// Random numbers addressed by (seed, stream, index). Two streams with the
/// same seed never overlap; a given address always yields the same value.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t stream) : philox_(seed), stream_(stream) {}

    /// Uniform on the open interval (0, 1).
    double uniform(std::uint64_t index) const;

    /// Standard normal (Box-Muller on one Philox block).
    double normal(std::uint64_t index) const;

private:
    Philox4x32::Block block(std::uint64_t index) const;

    Philox4x32 philox_;
    std::uint64_t stream_;
};

}  // namespace bvae
