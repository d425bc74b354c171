#pragma once

#include "psdmap/kernels.hpp"
#include "psdmap/model.hpp"
#include "psdmap/qp.hpp"

#include <vector>

namespace psdmap {

/// Stacked measurement model. J = total number of records; N = number of distinct anchors.
struct DesignMatrices {
    std::vector<Location> anchors;  // distinct sensor locations, in order of first appearance
    std::vector<int> anchor_of;     // anchor index of each record (length J)
    Matrix Phi;                     // M x J, column j = phi of record j
    Matrix Phi0;                    // MN x J, column j = e_{a(j)} kron phi_j
    Vector y;                       // J centroids
    Vector eps;                     // J half-widths
    Vector raw;                     // J raw powers (empty unless every record carries one)
    int channels = 0;

    Eigen::Index measurements() const { return y.size(); }
    Eigen::Index anchor_count() const { return static_cast<Eigen::Index>(anchors.size()); }
};

/// Anchors are deduplicated by exact coordinate equality.
DesignMatrices assemble_design(const std::vector<MeasurementRecord>& records);

/// l(x) = sum_n K(x, x_n) c_n + sum_nu B_nu(x) theta_nu.
struct MapEstimate {
    std::vector<Location> anchors;
    Vector c;      // MN, anchor-major: c[n * M + m]
    Vector theta;  // N_B * M, basis-major: theta[nu * M + m]; empty when nonparametric
    KernelSpec kernel;
    BasisSpec basis;
    double lambda = 0.0;
    int channels = 0;

    PowerVector operator()(const Location& x) const;
};

PowerVector evaluate_map(const MapEstimate& est, const Location& x);

/// Row i holds l(points[i]).
Matrix evaluate_map(const MapEstimate& est, const std::vector<Location>& points);

/// c^T K c over the anchor set.
double rkhs_norm_sq(const MapEstimate& est);

struct DualSolution {
    Vector alpha;
    Vector beta;
    Vector mu;    // equality multipliers (length N_B * M); empty for nonparametric fits
    Vector xi;    // measurement above the tube: max(0, y - eps - f)
    Vector zeta;  // measurement below the tube: max(0, f - y - eps)
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double gap = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    QpStatus status = QpStatus::MaxIter;
};

struct SvmFit {
    MapEstimate estimate;
    DualSolution dual;
};

struct FitOptions {
    double tol = 1e-9;
    int max_iter = 150;
    /// Assemble the full MN-dimensional matrices instead of the per-channel fast path.
    bool dense = false;
};

/// Kernel ridge regression on the raw powers: c = (Phi0 Phi0^T K + lambda N I)^{-1} Phi0 pi.
MapEstimate fit_ridge(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel, double lambda);

/// sum_j (pi_j - f_j)^2 + lambda N c^T K c, the objective minimized by fit_ridge.
double ridge_objective(const DesignMatrices& design, const Matrix& kernel_dense, const Vector& c, double lambda);

/// Epsilon-insensitive fit without a parametric part.
SvmFit fit_svm_nonparametric(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel, double lambda,
                             const FitOptions& opts = {});

/// Epsilon-insensitive fit with parametric part; theta is read from the equality multipliers.
SvmFit fit_svm_semiparametric(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel,
                              const BasisSpec& basis, double lambda, const FitOptions& opts = {});

/// Semiparametric fit for kernels that are only conditionally positive definite.
SvmFit fit_svm_cpd(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel, const BasisSpec& basis,
                   double lambda, const FitOptions& opts = {});

/// sum(xi + zeta) + lambda J c^T K c evaluated at an estimate.
double svm_primal_objective(const DesignMatrices& design, const MapEstimate& est);

/// K_tilde = (P K P kron 1 1^T) o (Phi^T Phi) generalized to arbitrary per-anchor counts:
/// entry (j, j') = (P K P)(a(j), a(j')) phi_j^T phi_j'. `basis` may have zero columns.
Matrix assemble_ktilde_separable(const Matrix& kernel, const Matrix& basis, const Matrix& phi_bar,
                                 const std::vector<int>& anchor_of);

/// Same with P records per anchor, grouped by anchor.
Matrix assemble_ktilde_separable(const Matrix& kernel, const Matrix& basis, const Matrix& phi_bar, int per_anchor);

/// Phi0^T P K P Phi0 from the full MN-dimensional matrices.
Matrix assemble_ktilde_dense(const Matrix& kernel_dense, const Matrix& basis_dense, const Matrix& phi0);

/// theta = mu - [(B^T B)^{-1} B^T K kron I_M] c.
Vector theta_recovery_separable(const Vector& mu, const Matrix& kernel, const Matrix& basis, const Vector& c_bar);

/// theta = mu - (B^T B)^{-1} B^T K c.
Vector theta_recovery_dense(const Vector& mu, const Matrix& kernel_dense, const Matrix& basis_dense, const Vector& c);

}  // namespace psdmap
