#pragma once

#include "psdmap/model.hpp"
#include "psdmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace testutil {

inline std::vector<psdmap::Location> random_locations(psdmap::CounterRng& rng, int n, int dim) {
    std::vector<psdmap::Location> out;
    for (int i = 0; i < n; ++i) {
        psdmap::Vector c(dim);
        for (int k = 0; k < dim; ++k) c(k) = rng.uniform();
        out.emplace_back(c);
    }
    return out;
}

inline psdmap::Matrix random_matrix(psdmap::CounterRng& rng, Eigen::Index r, Eigen::Index c) {
    psdmap::Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
    return m;
}

inline psdmap::Vector random_vector(psdmap::CounterRng& rng, Eigen::Index n) {
    psdmap::Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

inline double max_abs(const psdmap::Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testutil

#include "psdmap/quantize.hpp"

namespace testutil {

/// Smooth positive field used to generate synthetic measurements.
inline psdmap::PowerVector smooth_field(const psdmap::Location& x, int channels) {
    psdmap::PowerVector l(channels);
    for (int m = 0; m < channels; ++m) {
        const double centre = 0.2 + 0.6 * m / std::max(1, channels - 1);
        double r2 = 0.0;
        for (int k = 0; k < x.dim(); ++k) r2 += (x.coords(k) - centre) * (x.coords(k) - centre);
        l(m) = 0.3 + std::exp(-r2 / 0.1);
    }
    return l;
}

/// N anchors with P records each; phi ~ U[0,1]^M; values quantized with a uniform quantizer of `bits` bits.
inline std::vector<psdmap::MeasurementRecord> random_records(psdmap::CounterRng& rng, int n, int p, int m, int dim,
                                                             int bits) {
    const auto anchors = random_locations(rng, n, dim);
    const auto spec = psdmap::QuantizerSpec::uniform(0.0, 1.0 * m / (1 << bits), 1 << bits);
    std::vector<psdmap::MeasurementRecord> out;
    for (int a = 0; a < n; ++a) {
        for (int k = 0; k < p; ++k) {
            psdmap::MeasurementRecord r;
            r.sensor_index = a;
            r.location = anchors[static_cast<std::size_t>(a)];
            r.phi.resize(m);
            for (int i = 0; i < m; ++i) r.phi(i) = rng.uniform();
            const double raw = r.phi.dot(smooth_field(r.location, m)) + 0.05 * rng.normal();
            const auto cell = psdmap::quantize(spec, std::abs(raw));
            const auto iv = psdmap::interval_of(spec, cell.index);
            r.raw = std::abs(raw);
            r.q_index = cell.index;
            r.y = iv.y;
            r.eps = iv.eps;
            r.clipped = cell.clipped;
            out.push_back(std::move(r));
        }
    }
    return out;
}

}  // namespace testutil
