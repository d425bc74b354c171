#include "psdmap/batch.hpp"

#include <cmath>

namespace psdmap {

namespace {

enum class DualKind { Nonparametric, Semiparametric, Cpd };

void check_lambda(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda", "must be a positive finite number");
}

// Gathers G(a(j), a(j')) into a J x J matrix.
Matrix gather(const Matrix& g, const std::vector<int>& anchor_of) {
    const auto j = static_cast<Eigen::Index>(anchor_of.size());
    Matrix out(j, j);
    for (Eigen::Index c = 0; c < j; ++c)
        for (Eigen::Index r = 0; r < j; ++r) out(r, c) = g(anchor_of[static_cast<std::size_t>(r)], anchor_of[static_cast<std::size_t>(c)]);
    return out;
}

// Columns of B that are exactly zero carry no information and are dropped; their theta stays 0.
std::vector<Eigen::Index> nonzero_columns(const Matrix& b) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
        if (b.col(k).cwiseAbs().maxCoeff() > 0.0) keep.push_back(k);
    }
    return keep;
}

Matrix select_columns(const Matrix& b, const std::vector<Eigen::Index>& cols) {
    Matrix out(b.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = b.col(cols[k]);
    return out;
}

void check_equality_rank(const Matrix& a0, const BasisSpec& basis) {
    if (a0.rows() == 0) return;
    Eigen::JacobiSVD<Matrix> svd(a0);
    const Vector sv = svd.singularValues();
    if (!(sv.maxCoeff() > 0.0) || sv.minCoeff() < 1e-10 * sv.maxCoeff())
        throw SolverError("B^T Phi0 is rank deficient for " + basis.describe() +
                          " (too few sensors or measurements to identify the parametric part)");
}

// Everything the dual needs, plus what recovery needs afterwards.
struct DualData {
    Matrix ktilde;                          // J x J
    Matrix a0;                              // equality rows x J
    std::vector<Eigen::Index> theta_index;  // theta entry of each equality row
};

struct Recovery {
    std::vector<Matrix> kernels;  // per-channel (size 1 if shared)
    ChannelBasis basis;
    // Dense-path data.
    Matrix k_dense;
    Matrix b_dense;
    std::vector<Eigen::Index> b_cols;
};

const Matrix& kernel_for(const std::vector<Matrix>& ks, int m) { return ks.size() == 1 ? ks.front() : ks[static_cast<std::size_t>(m)]; }

DualData build_channelwise(const DesignMatrices& d, const KernelSpec& kernel, const BasisSpec& basis, DualKind kind,
                           Recovery& rec) {
    const int mch = d.channels;
    const auto j = d.measurements();
    rec.kernels = channel_kernels(kernel, d.anchors);
    if (!basis.empty()) rec.basis = channel_basis(basis, d.anchors, mch);
    if (kind == DualKind::Cpd) {
        for (const auto& bm : rec.basis.values) {
            if (bm.cols() > 0) (void)projector(bm, basis.describe());  // rank check of B^T B
        }
    }

    DualData out;
    const bool shared = rec.kernels.size() == 1 && basis.separable();
    if (shared) {
        const Matrix b = basis.empty() ? Matrix(d.anchor_count(), 0) : rec.basis.values.front();
        out.ktilde = kind == DualKind::Cpd ? assemble_ktilde_separable(rec.kernels.front(), b, d.Phi, d.anchor_of)
                                           : assemble_ktilde_separable(rec.kernels.front(), Matrix(d.anchor_count(), 0), d.Phi, d.anchor_of);
    } else {
        out.ktilde = Matrix::Zero(j, j);
        for (int m = 0; m < mch; ++m) {
            Matrix km = kernel_for(rec.kernels, m);
            if (kind == DualKind::Cpd && !basis.empty()) {
                const Matrix& bm = rec.basis.values[static_cast<std::size_t>(m)];
                if (bm.cols() > 0) {
                    const Matrix p = projector(bm, basis.describe());
                    km = p * km * p;
                }
            }
            const Vector phi = d.Phi.row(m).transpose();
            out.ktilde += gather(km, d.anchor_of).cwiseProduct(phi * phi.transpose());
        }
    }

    if (kind != DualKind::Nonparametric && !basis.empty()) {
        std::vector<Vector> rows;
        for (int m = 0; m < mch; ++m) {
            const Matrix& bm = rec.basis.values[static_cast<std::size_t>(m)];
            for (Eigen::Index k = 0; k < bm.cols(); ++k) {
                Vector row(j);
                for (Eigen::Index col = 0; col < j; ++col) row(col) = bm(d.anchor_of[static_cast<std::size_t>(col)], k) * d.Phi(m, col);
                rows.push_back(std::move(row));
                out.theta_index.push_back(rec.basis.theta_index[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)]);
            }
        }
        out.a0.resize(static_cast<Eigen::Index>(rows.size()), j);
        for (std::size_t r = 0; r < rows.size(); ++r) out.a0.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    } else {
        out.a0.resize(0, j);
    }
    return out;
}

DualData build_dense(const DesignMatrices& d, const KernelSpec& kernel, const BasisSpec& basis, DualKind kind, Recovery& rec) {
    rec.k_dense = assemble_kernel_dense(kernel, d.anchors);
    DualData out;
    if (kind == DualKind::Nonparametric || basis.empty()) {
        out.ktilde = d.Phi0.transpose() * rec.k_dense * d.Phi0;
        out.a0.resize(0, d.measurements());
        return out;
    }
    const Matrix b_full = assemble_basis_matrix(basis, d.anchors, d.channels);
    rec.b_cols = nonzero_columns(b_full);
    rec.b_dense = select_columns(b_full, rec.b_cols);
    out.ktilde = kind == DualKind::Cpd ? assemble_ktilde_dense(rec.k_dense, rec.b_dense, d.Phi0)
                                       : Matrix(d.Phi0.transpose() * rec.k_dense * d.Phi0);
    if (kind == DualKind::Cpd) (void)projector(rec.b_dense, basis.describe());
    out.a0 = rec.b_dense.transpose() * d.Phi0;
    out.theta_index = rec.b_cols;
    return out;
}

// f_j = phi_j^T l(x_{a(j)}) for every record.
Vector fitted_measurements(const DesignMatrices& d, const MapEstimate& est) {
    const Matrix at_anchors = evaluate_map(est, d.anchors);  // N x M
    Vector f(d.measurements());
    for (Eigen::Index j = 0; j < f.size(); ++j)
        f(j) = at_anchors.row(d.anchor_of[static_cast<std::size_t>(j)]).dot(d.Phi.col(j));
    return f;
}

SvmFit fit_dual(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel, const BasisSpec& basis,
                double lambda, const FitOptions& opts, DualKind kind) {
    check_lambda(lambda);
    const DesignMatrices d = assemble_design(records);
    if (kernel.channels() != d.channels) throw DimensionError("kernel channel count does not match the measurements");
    const auto j = d.measurements();
    const int mch = d.channels;
    const double jd = static_cast<double>(j);
    const double scale = 2.0 * lambda * jd;

    Recovery rec;
    DualData dd = opts.dense ? build_dense(d, kernel, basis, kind, rec) : build_channelwise(d, kernel, basis, kind, rec);
    dd.ktilde = 0.5 * (dd.ktilde + dd.ktilde.transpose());
    check_equality_rank(dd.a0, basis);

    Vector q(2 * j);
    q << -scale * (d.y - d.eps), scale * (d.y + d.eps);
    Matrix aeq;
    if (dd.a0.rows() > 0) {
        aeq.resize(dd.a0.rows(), 2 * j);
        aeq << dd.a0, -dd.a0;
    }
    const QpProblem qp = QpProblem::paired(dd.ktilde, q, Vector::Zero(2 * j), Vector::Ones(2 * j), aeq,
                                           dd.a0.rows() > 0 ? Vector(Vector::Zero(dd.a0.rows())) : Vector());
    const QpSolution sol = solve_qp(qp, opts.tol, opts.max_iter);
    if (sol.status == QpStatus::Infeasible) throw SolverError("dual QP is infeasible");
    if (sol.status != QpStatus::Optimal && !(sol.kkt_residual <= 1e-6))
        throw SolverError("dual QP did not converge (KKT residual " + std::to_string(sol.kkt_residual) + ")");

    SvmFit fit;
    DualSolution& dual = fit.dual;
    dual.alpha = sol.z.head(j).cwiseMax(0.0).cwiseMin(1.0);
    dual.beta = sol.z.tail(j).cwiseMax(0.0).cwiseMin(1.0);
    dual.status = sol.status;
    dual.iterations = sol.iterations;
    dual.kkt_residual = sol.kkt_residual;
    const Vector gamma = dual.alpha - dual.beta;

    MapEstimate& est = fit.estimate;
    est.anchors = d.anchors;
    est.kernel = kernel;
    est.basis = kind == DualKind::Nonparametric ? BasisSpec::none() : basis;
    est.lambda = lambda;
    est.channels = mch;
    est.c = d.Phi0 * gamma / scale;

    const Eigen::Index theta_len = est.basis.count() * mch;
    if (theta_len > 0) {
        dual.mu = Vector::Zero(theta_len);
        for (std::size_t r = 0; r < dd.theta_index.size(); ++r)
            dual.mu(dd.theta_index[r]) = sol.eq_multipliers(static_cast<Eigen::Index>(r)) / scale;
        if (kind == DualKind::Semiparametric) {
            est.theta = dual.mu;
        } else if (opts.dense) {
            est.theta = Vector::Zero(theta_len);
            Vector mu_kept(static_cast<Eigen::Index>(rec.b_cols.size()));
            for (std::size_t k = 0; k < rec.b_cols.size(); ++k) mu_kept(static_cast<Eigen::Index>(k)) = dual.mu(rec.b_cols[k]);
            const Vector th = theta_recovery_dense(mu_kept, rec.k_dense, rec.b_dense, est.c);
            for (std::size_t k = 0; k < rec.b_cols.size(); ++k) est.theta(rec.b_cols[k]) = th(static_cast<Eigen::Index>(k));
        } else {
            est.theta = dual.mu;
            const auto n = d.anchor_count();
            for (int m = 0; m < mch; ++m) {
                const Matrix& bm = rec.basis.values[static_cast<std::size_t>(m)];
                if (bm.cols() == 0) continue;
                Vector cm(n);
                for (Eigen::Index a = 0; a < n; ++a) cm(a) = est.c(a * mch + m);
                const Vector corr = (bm.transpose() * bm).ldlt().solve(bm.transpose() * (kernel_for(rec.kernels, m) * cm));
                const auto& idx = rec.basis.theta_index[static_cast<std::size_t>(m)];
                for (std::size_t k = 0; k < idx.size(); ++k) est.theta(idx[k]) -= corr(static_cast<Eigen::Index>(k));
            }
        }
    }

    const Vector f = fitted_measurements(d, est);
    dual.xi = (d.y - d.eps - f).cwiseMax(0.0);
    dual.zeta = (f - d.y - d.eps).cwiseMax(0.0);
    dual.primal_objective = dual.xi.sum() + dual.zeta.sum() + lambda * jd * rkhs_norm_sq(est);
    dual.dual_objective = -gamma.dot(dd.ktilde * gamma) / (4.0 * lambda * jd) + (d.y - d.eps).dot(dual.alpha) -
                          (d.y + d.eps).dot(dual.beta);
    dual.gap = dual.primal_objective - dual.dual_objective;
    return fit;
}

}  // namespace

DesignMatrices assemble_design(const std::vector<MeasurementRecord>& records) {
    if (records.empty()) throw DimensionError("assemble_design needs at least one record");
    DesignMatrices d;
    d.channels = static_cast<int>(records.front().phi.size());
    if (d.channels < 1) throw DimensionError("records need M >= 1 filter weights");
    const auto j = static_cast<Eigen::Index>(records.size());
    const int dim = records.front().location.dim();
    bool all_raw = true;
    for (const auto& r : records) {
        if (r.phi.size() != d.channels) throw DimensionError("records disagree on the number of channels M");
        if (r.location.dim() != dim) throw DimensionError("records disagree on the location dimension");
        if (!(r.eps >= 0.0)) throw DimensionError("record half-width eps must be nonnegative");
        all_raw = all_raw && r.raw.has_value();
    }

    d.Phi.resize(d.channels, j);
    d.y.resize(j);
    d.eps.resize(j);
    if (all_raw) d.raw.resize(j);
    for (Eigen::Index k = 0; k < j; ++k) {
        const auto& r = records[static_cast<std::size_t>(k)];
        int a = -1;
        for (std::size_t n = 0; n < d.anchors.size(); ++n) {
            if (d.anchors[n] == r.location) {
                a = static_cast<int>(n);
                break;
            }
        }
        if (a < 0) {
            a = static_cast<int>(d.anchors.size());
            d.anchors.push_back(r.location);
        }
        d.anchor_of.push_back(a);
        d.Phi.col(k) = r.phi;
        d.y(k) = r.y;
        d.eps(k) = r.eps;
        if (all_raw) d.raw(k) = *r.raw;
    }
    d.Phi0 = Matrix::Zero(d.anchor_count() * d.channels, j);
    for (Eigen::Index k = 0; k < j; ++k) d.Phi0.block(d.anchor_of[static_cast<std::size_t>(k)] * d.channels, k, d.channels, 1) = d.Phi.col(k);
    return d;
}

PowerVector MapEstimate::operator()(const Location& x) const { return evaluate_map(*this, x); }

PowerVector evaluate_map(const MapEstimate& est, const Location& x) {
    const int m = est.channels;
    PowerVector out = PowerVector::Zero(m);
    for (std::size_t n = 0; n < est.anchors.size(); ++n) {
        for (int ch = 0; ch < m; ++ch) {
            const double cv = est.c(static_cast<Eigen::Index>(n) * m + ch);
            if (cv != 0.0) out(ch) += kernel_entry(est.kernel, ch, x, est.anchors[n]) * cv;
        }
    }
    if (est.theta.size() > 0) out += est.basis.block(x, m) * est.theta;
    return out;
}

Matrix evaluate_map(const MapEstimate& est, const std::vector<Location>& points) {
    Matrix out(static_cast<Eigen::Index>(points.size()), est.channels);
    for (std::size_t i = 0; i < points.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = evaluate_map(est, points[i]).transpose();
    return out;
}

double rkhs_norm_sq(const MapEstimate& est) {
    const auto ks = channel_kernels(est.kernel, est.anchors);
    const auto n = static_cast<Eigen::Index>(est.anchors.size());
    double total = 0.0;
    for (int m = 0; m < est.channels; ++m) {
        Vector cm(n);
        for (Eigen::Index a = 0; a < n; ++a) cm(a) = est.c(a * est.channels + m);
        total += cm.dot(kernel_for(ks, m) * cm);
    }
    return total;
}

double svm_primal_objective(const DesignMatrices& design, const MapEstimate& est) {
    const Vector f = fitted_measurements(design, est);
    const Vector xi = (design.y - design.eps - f).cwiseMax(0.0);
    const Vector zeta = (f - design.y - design.eps).cwiseMax(0.0);
    return xi.sum() + zeta.sum() + est.lambda * static_cast<double>(design.measurements()) * rkhs_norm_sq(est);
}

MapEstimate fit_ridge(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel, double lambda) {
    check_lambda(lambda);
    const DesignMatrices d = assemble_design(records);
    if (d.raw.size() == 0) throw DimensionError("ridge regression needs a raw power value on every record");
    if (kernel.channels() != d.channels) throw DimensionError("kernel channel count does not match the measurements");
    const Matrix k = assemble_kernel_dense(kernel, d.anchors);
    Matrix sys = d.Phi0 * d.Phi0.transpose() * k;
    sys.diagonal().array() += lambda * static_cast<double>(d.anchor_count());
    Eigen::PartialPivLU<Matrix> lu(sys);
    const Vector rhs = d.Phi0 * d.raw;
    Vector c = lu.solve(rhs);
    if (!c.allFinite() || (sys * c - rhs).norm() > 1e-6 * (1.0 + rhs.norm()))
        throw SolverError("ridge system is numerically singular");

    MapEstimate est;
    est.anchors = d.anchors;
    est.c = std::move(c);
    est.kernel = kernel;
    est.lambda = lambda;
    est.channels = d.channels;
    return est;
}

double ridge_objective(const DesignMatrices& design, const Matrix& kernel_dense, const Vector& c, double lambda) {
    const Vector f = design.Phi0.transpose() * (kernel_dense * c);
    return (design.raw - f).squaredNorm() + lambda * static_cast<double>(design.anchor_count()) * c.dot(kernel_dense * c);
}

SvmFit fit_svm_nonparametric(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel, double lambda,
                             const FitOptions& opts) {
    return fit_dual(records, kernel, BasisSpec::none(), lambda, opts, DualKind::Nonparametric);
}

SvmFit fit_svm_semiparametric(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel,
                              const BasisSpec& basis, double lambda, const FitOptions& opts) {
    if (!kernel.positive_definite())
        throw ConfigError("kernel", "the semiparametric estimator needs a positive definite kernel; use the cpd estimator");
    return fit_dual(records, kernel, basis, lambda, opts, DualKind::Semiparametric);
}

SvmFit fit_svm_cpd(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel, const BasisSpec& basis,
                   double lambda, const FitOptions& opts) {
    if (basis.empty()) throw ConfigError("basis", "the cpd estimator needs a nonempty parametric basis");
    return fit_dual(records, kernel, basis, lambda, opts, DualKind::Cpd);
}

Matrix assemble_ktilde_separable(const Matrix& kernel, const Matrix& basis, const Matrix& phi_bar,
                                 const std::vector<int>& anchor_of) {
    if (kernel.rows() != kernel.cols()) throw DimensionError("scalar kernel matrix must be square");
    if (basis.rows() != kernel.rows()) throw DimensionError("scalar basis must have one row per anchor");
    if (static_cast<Eigen::Index>(anchor_of.size()) != phi_bar.cols())
        throw DimensionError("anchor index list must have one entry per measurement");
    for (int a : anchor_of) {
        if (a < 0 || a >= kernel.rows()) throw DimensionError("anchor index out of range");
    }
    Matrix kp = kernel;
    if (basis.cols() > 0) {
        const Matrix p = projector(basis, "scalar basis");
        kp = p * kernel * p;
    }
    return gather(kp, anchor_of).cwiseProduct(phi_bar.transpose() * phi_bar);
}

Matrix assemble_ktilde_separable(const Matrix& kernel, const Matrix& basis, const Matrix& phi_bar, int per_anchor) {
    if (per_anchor < 1 || phi_bar.cols() != kernel.rows() * per_anchor)
        throw DimensionError("phi_bar must have N * P columns");
    std::vector<int> anchor_of(static_cast<std::size_t>(phi_bar.cols()));
    for (std::size_t j = 0; j < anchor_of.size(); ++j) anchor_of[j] = static_cast<int>(j) / per_anchor;
    return assemble_ktilde_separable(kernel, basis, phi_bar, anchor_of);
}

Matrix assemble_ktilde_dense(const Matrix& kernel_dense, const Matrix& basis_dense, const Matrix& phi0) {
    if (basis_dense.cols() == 0) return phi0.transpose() * kernel_dense * phi0;
    const Matrix p = projector(basis_dense, "basis");
    const Matrix pp = p * phi0;
    return pp.transpose() * kernel_dense * pp;
}

Vector theta_recovery_separable(const Vector& mu, const Matrix& kernel, const Matrix& basis, const Vector& c_bar) {
    const auto n = kernel.rows();
    const auto nb = basis.cols();
    if (nb == 0 || n == 0 || c_bar.size() % n != 0) throw DimensionError("inconsistent separable theta recovery inputs");
    const auto m = c_bar.size() / n;
    if (mu.size() != nb * m) throw DimensionError("mu must have N_B * M entries");
    const Matrix gram = basis.transpose() * basis;
    Eigen::LDLT<Matrix> ldlt(gram);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12) throw SolverError("scalar basis Gram matrix is singular");
    const Matrix g = ldlt.solve(basis.transpose() * kernel);  // nb x n
    const Eigen::Map<const Matrix> cmat(c_bar.data(), m, n);  // column a = coefficients of anchor a
    const Matrix corr = cmat * g.transpose();                  // m x nb, column nu
    return mu - Eigen::Map<const Vector>(corr.data(), corr.size());
}

Vector theta_recovery_dense(const Vector& mu, const Matrix& kernel_dense, const Matrix& basis_dense, const Vector& c) {
    const Matrix gram = basis_dense.transpose() * basis_dense;
    return mu - gram.ldlt().solve(basis_dense.transpose() * (kernel_dense * c));
}

}  // namespace psdmap
