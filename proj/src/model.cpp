#include "psdmap/model.hpp"

#include <algorithm>
#include <cmath>

namespace psdmap {

void PiecewiseDensity::validate() const {
    if (edges.size() < 2) throw DimensionError("frequency grid needs at least two edges");
    if (values.size() + 1 != edges.size())
        throw DimensionError("density needs one value per frequency cell");
    for (std::size_t g = 0; g + 1 < edges.size(); ++g) {
        if (!(edges[g + 1] > edges[g])) throw DimensionError("frequency edges must be strictly increasing");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw DimensionError("density values must be finite");
    }
}

double PiecewiseDensity::integral() const {
    double total = 0.0;
    for (std::size_t g = 0; g < values.size(); ++g) total += values[g] * (edges[g + 1] - edges[g]);
    return total;
}

double PiecewiseDensity::at(double f) const {
    if (f < edges.front() || f >= edges.back()) return 0.0;
    auto it = std::upper_bound(edges.begin(), edges.end(), f);
    auto cell = static_cast<std::size_t>(std::distance(edges.begin(), it)) - 1;
    return values[cell];
}

SpectralBasis::SpectralBasis(std::vector<double> edges, std::vector<std::vector<double>> densities)
    : edges_(std::move(edges)) {
    if (densities.empty()) throw DimensionError("spectral basis needs at least one channel");
    for (auto& d : densities) {
        PiecewiseDensity band{edges_, std::move(d)};
        band.validate();
        for (double v : band.values) {
            if (v < 0.0) throw DimensionError("spectral densities must be nonnegative");
        }
        if (std::abs(band.integral() - 1.0) > 1e-9)
            throw DimensionError("each spectral density must integrate to 1");
        bands_.push_back(std::move(band));
    }
}

double evaluate_psd(const SpectralBasis& basis, const PowerVector& gains, double f) {
    if (gains.size() != basis.channels())
        throw DimensionError("gain vector length does not match the spectral basis");
    double psd = 0.0;
    for (int m = 0; m < basis.channels(); ++m) psd += gains(m) * basis.band(m).at(f);
    return psd;
}

double ensemble_power(const FilterWeight& phi, const PowerVector& gains) {
    if (phi.size() != gains.size()) throw DimensionError("phi and gain vectors differ in length");
    return phi.dot(gains);
}

FilterWeight compute_phi(const SpectralBasis& basis, const PiecewiseDensity& filter_response_sq) {
    filter_response_sq.validate();
    if (filter_response_sq.edges != basis.edges())
        throw DimensionError("filter response and spectral basis use different frequency grids");
    for (double v : filter_response_sq.values) {
        if (v < 0.0) throw DimensionError("|G(f)|^2 must be nonnegative");
    }
    const auto& edges = basis.edges();
    FilterWeight phi = FilterWeight::Zero(basis.channels());
    for (int m = 0; m < basis.channels(); ++m) {
        const auto& psi = basis.band(m).values;
        for (std::size_t g = 0; g < psi.size(); ++g)
            phi(m) += filter_response_sq.values[g] * psi[g] * (edges[g + 1] - edges[g]);
    }
    return phi;
}

}  // namespace psdmap
