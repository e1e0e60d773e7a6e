#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gsde/error.hpp"

namespace gsde {

/// splitmix64 finalizer; used to derive independent sub-seeds from a
/// master seed so that e.g. per-run and per-iteration streams never
/// overlap.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Rng: deterministic random source built on std::mt19937_64.
//
// The raw engine is the only implementation-defined-free part of <random>,
// so every variate below is derived from next_u64() by explicit arithmetic
// (no std:: distributions). Identical seeds therefore reproduce identical
// streams on any platform, which the training determinism contract relies
// on.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw ParamError("uniform_int: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller; consumes exactly two raw draws.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 uses the boost trick.
    double gamma(double alpha) {
        if (alpha <= 0.0) throw ParamError("gamma: alpha must be positive");
        if (alpha < 1.0) {
            const double u = 1.0 - uniform();  // (0, 1]
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x;
            double v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = 1.0 - uniform();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v;
            }
        }
    }

    double beta(double a, double b) {
        const double x = gamma(a);
        const double y = gamma(b);
        return x / (x + y);
    }

    /// Fisher-Yates shuffle driven by uniform_int.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Derive a fresh seed from this stream.
    uint64_t split() { return mix_seed(next_u64(), 0x5eed); }

private:
    std::mt19937_64 engine_;
};

}  // namespace gsde
