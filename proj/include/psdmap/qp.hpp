#pragma once

#include "psdmap/model.hpp"

#include <optional>
#include <string>

namespace psdmap {

/// minimize 1/2 z^T Q z + q^T z  subject to  lower <= z <= upper,  Aeq z = beq.
///
/// Problems whose Hessian has the form [[H, -H], [-H, H]] (the alpha/beta split of an
/// epsilon-insensitive dual) can be built with `paired`, which lets the solver factor a
/// k x k system instead of a 2k x 2k one.
struct QpProblem {
    Matrix Q;
    Vector q;
    Vector lower;
    Vector upper;
    Matrix Aeq;
    Vector beq;
    std::optional<Matrix> paired_block;

    static QpProblem paired(Matrix h, Vector q, Vector lower, Vector upper, Matrix aeq = Matrix(), Vector beq = Vector());

    Eigen::Index size() const { return q.size(); }
    Eigen::Index equalities() const { return Aeq.rows(); }
    Vector hessian_times(const Vector& z) const;
    Matrix dense_hessian() const;
    double objective(const Vector& z) const;
    void validate() const;
};

enum class QpStatus { Optimal, MaxIter, Infeasible };

std::string to_string(QpStatus s);

/// Stationarity convention: Q z + q + Aeq^T mu - lambda_lower + lambda_upper = 0,
/// with lambda_lower, lambda_upper >= 0 complementary to the box.
struct QpSolution {
    Vector z;
    Vector eq_multipliers;  // mu
    Vector lower_multipliers;
    Vector upper_multipliers;
    double objective = 0.0;
    double dual_objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    QpStatus status = QpStatus::MaxIter;
};

/// Primal-dual interior point method with Mehrotra predictor-corrector steps.
QpSolution solve_qp(const QpProblem& p, double tol = 1e-8, int max_iter = 100);

/// Scaled KKT residual of a candidate solution (stationarity, feasibility, complementarity).
double kkt_residual(const QpProblem& p, const QpSolution& s);

}  // namespace psdmap
