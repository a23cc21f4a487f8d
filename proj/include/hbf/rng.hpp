#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "hbf/core.hpp"

namespace hbf {

// Every random draw in the project goes through a Rng whose seed is derived
// from SystemConfig::seed with derive_seed, so equal configs give equal runs.

enum class Stream : std::uint64_t {
    Channel = 1,
    PilotInit = 2,
    NetInit = 3,
    TrainNoise = 4,
    EvalNoise = 5,
    Shuffle = 6,
    Codebook = 7,
    Split = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
    h = splitmix64(h ^ a);
    return splitmix64(h ^ (b * 0x2545f4914f6cdd1dULL));
}

/// Thin wrapper over mt19937_64. Gaussian draws use Box-Muller on the raw
/// engine output so sequences do not depend on the standard library's
/// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    /// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
    Complex complex_normal(double variance = 1.0) {
        const double s = std::sqrt(variance / 2.0);
        const double re = normal();
        const double im = normal();
        return {s * re, s * im};
    }

    /// Laplacian with scale b (standard deviation b * sqrt(2)).
    double laplace(double b) {
        const double u = uniform() - 0.5;
        return -b * std::copysign(1.0, u) * std::log(1.0 - 2.0 * std::abs(u));
    }

    std::uint64_t index(std::uint64_t n) { return engine_() % n; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hbf
