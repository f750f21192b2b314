#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace trendmine {

// Deterministic RNG wrapper. The variate transforms are written out here
// instead of using std::*_distribution so that a given seed produces the
// same stream on every standard library implementation.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        return static_cast<uint64_t>(uniform01() * static_cast<double>(n)) % n;
    }

    // Standard normal via Box-Muller, one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0;
        while (u == 0.0) u = uniform01();
        const double v = uniform01();
        const double mag = std::sqrt(-2.0 * std::log(u));
        spare_ = mag * std::sin(2.0 * M_PI * v);
        has_spare_ = true;
        return mag * std::cos(2.0 * M_PI * v);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace trendmine
