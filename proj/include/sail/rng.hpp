#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sail {

/// SplitMix64. The only generator in the library: its output is fixed across
/// platforms and standard libraries, unlike the <random> distributions.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform on the open interval (0, 1).
    double uniform_open() noexcept { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (one value per call; the pair partner is discarded).
    double normal() noexcept {
        const double u1 = uniform_open();
        const double u2 = uniform_open();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

/// Derives an independent stream seed from a root seed and a stream tag.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag) noexcept {
    SplitMix64 g(root ^ (tag * 0xD1B54A32D192ED03ULL));
    g.next();
    return g.next();
}

} // namespace sail
