#pragma once

#include <cstdint>
#include <random>

namespace pwlmdp {

/// SplitMix64 finaliser; used to derive independent seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/**
 * Portable seeded generator: std::mt19937_64 with its own integer-to-real
 * conversions, so draws are identical on every standard library.
 *
 * Stream splitting: child(seed, stream) is seeded with
 * splitmix64(splitmix64(seed) ^ splitmix64(stream + 1)). Generators use one
 * stream per (action, draw category) pair; experiments use one per instance.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    static Rng child(std::uint64_t seed, std::uint64_t stream) { return Rng(child_seed(seed, stream)); }

    static constexpr std::uint64_t child_seed(std::uint64_t seed, std::uint64_t stream) {
        return splitmix64(splitmix64(seed) ^ splitmix64(stream + 1));
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next() { return engine_(); }

    /// Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace pwlmdp
