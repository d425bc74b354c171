#pragma once

#include <cstdint>
#include <limits>

namespace psdmap {

/// Independent randomness sources. Each one gets its own counter stream so that
/// changing, e.g., the number of sensors does not perturb the noise draws.
enum class Stream : std::uint64_t {
    Field = 1,        // shadowing realizations
    Sensors = 2,      // sensor locations
    Phi = 3,          // filter weights
    Noise = 4,        // measurement noise eta
    Calibration = 5,  // quantizer Monte Carlo
    Evaluation = 6,   // NMSE evaluation points
    Schedule = 7,     // online presentation order
    Generic = 8,      // tests and utilities
};

/// Counter-based generator: draw i is splitmix64(key + (i + 1) * golden), where the key
/// is derived from (seed, stream). Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller.
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic child seed for run `run` of grid cell `cell` under a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

}  // namespace psdmap
