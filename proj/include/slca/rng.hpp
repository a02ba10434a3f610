#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace slca {

// Seeded generator with hand-rolled distributions. The standard library's
// distribution objects are implementation-defined, so every draw here is
// built directly from mt19937_64 output to keep results identical across
// platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n), n >= 1, by rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    bool coin() { return (eng_() >> 63) != 0; }

    // Box-Muller, single branch (two uniforms per draw, no cached value).
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Normal resampled until within +-limit stddevs, then scaled.
    double trunc_normal(double stddev, double limit = 2.0) {
        double z;
        do {
            z = normal();
        } while (z < -limit || z > limit);
        return z * stddev;
    }

private:
    std::mt19937_64 eng_;
};

// Stable tag-based sub-seed derivation (FNV-1a over the tag, mixed with the
// master seed) so independent parameter groups get independent streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    std::uint64_t h = 14695981039346656037ULL ^ master;
    for (unsigned char ch : tag) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    h ^= master >> 32;
    h *= 1099511628211ULL;
    return h;
}

}  // namespace slca
