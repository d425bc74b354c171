#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace psdmap {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Per-channel received power l(x) = [l_1(x), ..., l_M(x)]; entry M is the noise floor.
using PowerVector = Eigen::VectorXd;

/// Filter response weights phi_m = integral |G(f)|^2 Psi_m(f) df.
using FilterWeight = Eigen::VectorXd;

// Error hierarchy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : Error("config key '" + key + "': " + what), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

class SolverError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A point in the mapped region. Dimension is a runtime property (1, 2 or 3).
struct Location {
    Vector coords;

    Location() = default;
    explicit Location(Vector c) : coords(std::move(c)) {}
    Location(std::initializer_list<double> c) : coords(static_cast<Eigen::Index>(c.size())) {
        Eigen::Index i = 0;
        for (double v : c) coords(i++) = v;
    }

    int dim() const { return static_cast<int>(coords.size()); }
    bool operator==(const Location& other) const {
        return coords.size() == other.coords.size() && coords == other.coords;
    }
};

inline double squared_distance(const Location& a, const Location& b) {
    return (a.coords - b.coords).squaredNorm();
}

inline double distance(const Location& a, const Location& b) {
    return (a.coords - b.coords).norm();
}

/// Piecewise-constant function of frequency over the cells [edges[g], edges[g+1]).
struct PiecewiseDensity {
    std::vector<double> edges;
    std::vector<double> values;  // one per cell

    void validate() const;
    double integral() const;
    double at(double f) const;  // 0 outside the grid
};

/// Normalized spectral shapes Psi_1..Psi_M on a shared frequency grid. Entry M is the noise PSD.
class SpectralBasis {
public:
    SpectralBasis(std::vector<double> edges, std::vector<std::vector<double>> densities);

    int channels() const { return static_cast<int>(bands_.size()); }
    const std::vector<double>& edges() const { return edges_; }
    const PiecewiseDensity& band(int m) const { return bands_.at(static_cast<std::size_t>(m)); }

private:
    std::vector<double> edges_;
    std::vector<PiecewiseDensity> bands_;
};

/// Gamma(x, f) = sum_m l_m(x) Psi_m(f).
double evaluate_psd(const SpectralBasis& basis, const PowerVector& gains, double f);

/// pi = phi^T l.
double ensemble_power(const FilterWeight& phi, const PowerVector& gains);

/// Overlap integrals phi_m = integral |G|^2 Psi_m df. The filter must share the basis grid.
FilterWeight compute_phi(const SpectralBasis& basis, const PiecewiseDensity& filter_response_sq);

/// One interval observation [y - eps, y + eps) of phi^T l(location).
struct MeasurementRecord {
    int sensor_index = 0;
    Location location;
    FilterWeight phi;
    double y = 0.0;
    double eps = 0.0;
    std::optional<int> q_index;
    std::optional<double> raw;
    bool is_virtual = false;
    bool clipped = false;
};

}  // namespace psdmap
