#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace presspose {

enum class ErrorKind {
    BadMagic,
    Truncated,
    DimMismatch,
    NegativePressure,
    NonFinite,
    BadArgument,
    MissingFile,
    Io,
    MissingStats,
    MissingCheckpoint,
    Locked,
};

// Library-level failure with a machine-checkable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

// splitmix64; used to derive independent seeds from (run seed, index) pairs.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic RNG with fully specified sampling routines. std::mt19937_64
// is pinned by the standard, but the <random> distributions are not, so the
// draws below are implemented by hand.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next() { return state_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is < n / 2^64.
    uint64_t below(uint64_t n) { return next() % n; }

    // Box-Muller; one draw per call, the pair's second half is discarded to
    // keep the stream position independent of call parity.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586477 * u2);
    }

    // Normal truncated to +-2 stddev (resampled), the usual transformer init.
    double trunc_normal(double stddev) {
        for (;;) {
            double v = normal(0.0, stddev);
            if (std::fabs(v) <= 2.0 * stddev) return v;
        }
    }

private:
    std::mt19937_64 state_;
};

}  // namespace presspose
