#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gsa {

// Deterministic RNG. std::mt19937_64 output is pinned by the standard; the
// transforms below are hand-rolled because std::*_distribution is
// implementation-defined and would break byte-identical dataset generation.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next() { return engine_(); }

    // Uniform in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one value per call, no cached spare (keeps replay simple).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Uniform integer in [0, n), n >= 1. Rejection-free modulo is fine here:
    // n is tiny (frame counts) relative to 2^64, bias < 2^-50.
    uint64_t uniform_int(uint64_t n) { return engine_() % n; }

private:
    std::mt19937_64 engine_;
};

}  // namespace gsa
