#pragma once

#include "psdmap/model.hpp"

#include <span>
#include <vector>

namespace psdmap {

enum class QuantizerKind { Uniform, Cpq };

/// Boundaries tau_0 < tau_1 < ... < tau_R. Cell i is [tau_i, tau_{i+1}).
struct QuantizerSpec {
    std::vector<double> boundaries;
    QuantizerKind kind = QuantizerKind::Uniform;

    /// R equal cells of width `step` starting at tau_0.
    static QuantizerSpec uniform(double tau0, double step, int levels);

    int levels() const { return static_cast<int>(boundaries.size()) - 1; }
    /// b = ceil(log2 R).
    int bits() const;
    double lower() const { return boundaries.front(); }
    double upper() const { return boundaries.back(); }
    void validate() const;
};

struct QuantizerCell {
    int index = 0;
    bool clipped = false;  // value fell outside [tau_0, tau_R)
};

/// Index i with tau_i <= v < tau_{i+1}. Values below tau_0 map to cell 0 and values at or
/// above tau_R map to cell R - 1; both are flagged as clipped.
QuantizerCell quantize(const QuantizerSpec& spec, double v);

struct Interval {
    double y = 0.0;    // centroid
    double eps = 0.0;  // half-width
};

Interval interval_of(const QuantizerSpec& spec, int index);

/// tau_0 = 0, tau_R = empirical (1 - clip_prob) quantile, 2^bits equal cells.
QuantizerSpec calibrate_uniform(std::span<const double> samples, int bits, double clip_prob);

/// Boundaries at empirical quantiles so each of the 2^bits cells holds ~1/R of the samples.
QuantizerSpec calibrate_cpq(std::span<const double> samples, int bits);

/// M interval records per location spanning the whole quantizer range with phi = e_m.
std::vector<MeasurementRecord> virtual_records(const std::vector<Location>& locations, const QuantizerSpec& spec,
                                               int channels);

}  // namespace psdmap
