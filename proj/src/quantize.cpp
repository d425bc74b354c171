#include "psdmap/quantize.hpp"

#include <algorithm>
#include <cmath>

namespace psdmap {

namespace {

constexpr std::size_t kMinCalibrationSamples = 100;

std::vector<double> sorted_copy(std::span<const double> samples) {
    if (samples.size() < kMinCalibrationSamples)
        throw Error("quantizer calibration needs at least 100 samples");
    std::vector<double> s(samples.begin(), samples.end());
    for (double v : s) {
        if (!std::isfinite(v)) throw Error("quantizer calibration samples must be finite");
    }
    std::sort(s.begin(), s.end());
    return s;
}

int levels_for_bits(int bits) {
    if (bits < 1 || bits > 30) throw Error("quantizer bits must be in [1, 30]");
    return 1 << bits;
}

}  // namespace

QuantizerSpec QuantizerSpec::uniform(double tau0, double step, int levels) {
    QuantizerSpec spec;
    spec.kind = QuantizerKind::Uniform;
    spec.boundaries.resize(static_cast<std::size_t>(levels) + 1);
    for (int i = 0; i <= levels; ++i) spec.boundaries[static_cast<std::size_t>(i)] = tau0 + step * i;
    spec.validate();
    return spec;
}

int QuantizerSpec::bits() const {
    int b = 0;
    while ((1 << b) < levels()) ++b;
    return b;
}

void QuantizerSpec::validate() const {
    if (boundaries.size() < 3) throw Error("quantizer needs R >= 2 cells");
    for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
        if (!std::isfinite(boundaries[i]) || !std::isfinite(boundaries[i + 1]))
            throw Error("quantizer boundaries must be finite");
        if (!(boundaries[i + 1] > boundaries[i])) throw Error("quantizer boundaries must be strictly increasing");
    }
    if (kind == QuantizerKind::Uniform) {
        const double step = boundaries[1] - boundaries[0];
        for (std::size_t i = 1; i + 1 < boundaries.size(); ++i) {
            const double w = boundaries[i + 1] - boundaries[i];
            if (std::abs(w - step) > 1e-12 * std::max({1.0, std::abs(boundaries.front()), std::abs(boundaries.back())}))
                throw Error("uniform quantizer cells must have equal width");
        }
    }
}

QuantizerCell quantize(const QuantizerSpec& spec, double v) {
    const auto& tau = spec.boundaries;
    const int r = spec.levels();
    if (v < tau.front()) return {0, true};
    if (v >= tau.back()) return {r - 1, true};
    const auto it = std::upper_bound(tau.begin(), tau.end(), v);
    return {static_cast<int>(std::distance(tau.begin(), it)) - 1, false};
}

Interval interval_of(const QuantizerSpec& spec, int index) {
    if (index < 0 || index >= spec.levels()) throw Error("quantizer index out of range");
    const double lo = spec.boundaries[static_cast<std::size_t>(index)];
    const double hi = spec.boundaries[static_cast<std::size_t>(index) + 1];
    return {0.5 * (hi + lo), 0.5 * (hi - lo)};
}

QuantizerSpec calibrate_uniform(std::span<const double> samples, int bits, double clip_prob) {
    if (!(clip_prob > 0.0 && clip_prob < 1.0)) throw Error("clip probability must lie in (0, 1)");
    const int r = levels_for_bits(bits);
    const auto s = sorted_copy(samples);
    const auto n = s.size();
    if (s.front() == s.back()) throw Error("degenerate calibration samples (constant)");
    // Order statistic with about clip_prob * n samples strictly above it.
    const auto k = static_cast<std::size_t>(std::ceil((1.0 - clip_prob) * static_cast<double>(n)));
    const double top = s[std::clamp<std::size_t>(k, 1, n) - 1];
    if (!(top > 0.0)) throw Error("degenerate calibration samples (no positive range)");
    return QuantizerSpec::uniform(0.0, top / r, r);
}

QuantizerSpec calibrate_cpq(std::span<const double> samples, int bits) {
    const int r = levels_for_bits(bits);
    const auto s = sorted_copy(samples);
    const auto n = s.size();
    QuantizerSpec spec;
    spec.kind = QuantizerKind::Cpq;
    spec.boundaries.resize(static_cast<std::size_t>(r) + 1);
    spec.boundaries.front() = std::min(0.0, s.front());
    for (int i = 1; i < r; ++i) {
        const auto idx = static_cast<std::size_t>(std::ceil(static_cast<double>(i) * static_cast<double>(n) / r));
        spec.boundaries[static_cast<std::size_t>(i)] = s[std::min(idx, n - 1)];
    }
    spec.boundaries.back() = s.back();
    try {
        spec.validate();
    } catch (const Error&) {
        throw Error("calibration samples have too many ties for a constant-probability quantizer");
    }
    return spec;
}

std::vector<MeasurementRecord> virtual_records(const std::vector<Location>& locations, const QuantizerSpec& spec,
                                               int channels) {
    std::vector<MeasurementRecord> out;
    out.reserve(locations.size() * static_cast<std::size_t>(channels));
    const double y = 0.5 * (spec.lower() + spec.upper());
    const double eps = 0.5 * (spec.upper() - spec.lower());
    for (std::size_t n = 0; n < locations.size(); ++n) {
        for (int m = 0; m < channels; ++m) {
            MeasurementRecord rec;
            rec.sensor_index = static_cast<int>(n);
            rec.location = locations[n];
            rec.phi = FilterWeight::Unit(channels, m);
            rec.y = y;
            rec.eps = eps;
            rec.is_virtual = true;
            out.push_back(std::move(rec));
        }
    }
    return out;
}

}  // namespace psdmap
