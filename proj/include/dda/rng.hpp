#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace dda {

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent stream seed from a base seed and stream ids
/// (image index, epoch, purpose tag, ...). Order matters.
std::uint64_t derive_seed(std::uint64_t base, std::span<const std::uint64_t> ids) noexcept;
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> ids) noexcept {
    return derive_seed(base, std::span<const std::uint64_t>(ids.begin(), ids.size()));
}

/// mt19937_64 with portable bounded draws. The standard pins the engine's
/// output sequence; the draws below pin the mapping to ranges, so results
/// do not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n): high 64 bits of next() * n.
    std::size_t index(std::size_t n) {
        const auto wide = static_cast<unsigned __int128>(next()) * n;
        return static_cast<std::size_t>(wide >> 64);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Fair coin from the top bit.
    bool coin() { return (next() >> 63) != 0; }

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::size_t>(last - first);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace dda
