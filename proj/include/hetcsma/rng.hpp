#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hetcsma {

/// Seeded 64-bit engine with distribution code written out by hand so that
/// traces are bit-identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Exponential with the given rate (mean 1/rate).
    double exponential(double rate) {
        double x = 0.0;
        while (x <= 0.0) x = -std::log1p(-uniform()) / rate;
        return x;
    }

    /// Geometric on {1, 2, ...} with success probability p (mean 1/p).
    std::uint64_t geometric(double p) {
        if (p >= 1.0) return 1;
        const double u = uniform();
        return static_cast<std::uint64_t>(std::floor(std::log1p(-u) / std::log1p(-p))) + 1;
    }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

} // namespace hetcsma
