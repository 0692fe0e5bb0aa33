#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "segnoise/errors.hpp"

namespace segnoise {

// Deterministic random streams. The engine is std::mt19937_64 (its output
// sequence is pinned by the standard), but the distribution helpers are
// hand-rolled because std::uniform_*_distribution output is
// implementation-defined. Everything here is reproducible across builds.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1). 53-bit mantissa.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        if (!(lo < hi)) throw InvalidArgument("uniform: requires lo < hi");
        return lo + (hi - lo) * uniform();
    }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw InvalidArgument("uniform_index: n must be positive");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (polar form avoided to keep the draw
    // count per call fixed at two).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        // u1 == 0 would send log to -inf
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    std::mt19937_64 eng_;
};

// SplitMix64 step, used to derive independent stream seeds from a master
// seed plus a stream index without correlated low bits.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for substream `index` of purpose `tag` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
    return splitmix64(splitmix64(master ^ splitmix64(tag)) + index);
}

}  // namespace segnoise
