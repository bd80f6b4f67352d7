// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace aaw {

/// Deterministic RNG. Wraps mt19937_64 but derives all variates with
/// explicit arithmetic, so streams are identical across standard library
/// implementations (std:: distributions are not portable).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Modulo bias is negligible for the small n used here.
        return eng_() % n;
    }

    int range(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Independent child stream; used for per-frame generator seeds.
    Rng fork(std::uint64_t salt) const {
        std::uint64_t s = seed_mix_ ^ (salt * 0x9E3779B97F4A7C15ull);
        s ^= s >> 30;
        s *= 0xBF58476D1CE4E5B9ull;
        s ^= s >> 27;
        return Rng(s);
    }

    /// Records the construction seed so fork() is a pure function of it.
    static Rng seeded(std::uint64_t seed) {
        Rng r(seed);
        r.seed_mix_ = seed;
        return r;
    }

private:
    std::mt19937_64 eng_;
    std::uint64_t seed_mix_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace aaw
