#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cavtrack {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Stable sub-stream seed for (stream, index) pairs. Used for per-window
// detector draws so serial and parallel execution produce identical output.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(base ^ splitmix64(stream + 1)) ^ (index + 1));
}

// Deterministic generator with explicit draw primitives. The distributions
// are implemented here rather than taken from <random> so the draw sequence
// is pinned by this file alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

    // uniform on (0,1]
    double uniform() {
        return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
    }

    // standard normal, Box-Muller (one value per pair, no cache)
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Poisson with arbitrary mean: multiplicative method on <=30 chunks,
    // exact for any splittable mean (Poisson sums are Poisson).
    long long poisson(double mean) {
        long long total = 0;
        double remaining = mean;
        while (remaining > 0.0) {
            const double chunk = remaining > 30.0 ? 30.0 : remaining;
            remaining -= chunk;
            const double limit = std::exp(-chunk);
            double prod = uniform();
            long long k = 0;
            while (prod > limit) {
                prod *= uniform();
                ++k;
            }
            total += k;
        }
        return total;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace cavtrack
