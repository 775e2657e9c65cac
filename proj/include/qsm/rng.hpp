#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qsm {

// All randomness in the toolkit flows through these helpers instead of the
// <random> distributions, whose outputs the standard does not pin down.
// mt19937_64 itself is fully specified, so seeds reproduce bit-identically
// everywhere.

inline double uniform01(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53; // [0, 1)
}

// Uniform in [-a, a).
inline double uniform_sym(std::mt19937_64& eng, double a) {
    return a * (2.0 * uniform01(eng) - 1.0);
}

// Standard normal via Box-Muller on the pinned uniform stream.
class GaussianGen {
public:
    explicit GaussianGen(std::uint64_t seed) : eng_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform01(eng_); // (0, 1], keeps log finite
        const double u2 = uniform01(eng_);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64, used to derive independent sub-seeds from one master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace qsm
