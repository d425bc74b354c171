#include "psdmap/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>
#ifdef PSDMAP_QP_TRACE
#include <cstdio>
#endif

namespace psdmap {

QpProblem QpProblem::paired(Matrix h, Vector q, Vector lower, Vector upper, Matrix aeq, Vector beq) {
    QpProblem p;
    p.q = std::move(q);
    p.lower = std::move(lower);
    p.upper = std::move(upper);
    p.Aeq = aeq.size() == 0 ? Matrix(0, p.q.size()) : std::move(aeq);
    p.beq = beq.size() == 0 ? Vector(p.Aeq.rows()) : std::move(beq);
    p.paired_block = std::move(h);
    return p;
}

Vector QpProblem::hessian_times(const Vector& z) const {
    if (paired_block) {
        const auto k = paired_block->rows();
        const Vector hd = *paired_block * (z.head(k) - z.tail(k));
        Vector out(2 * k);
        out << hd, -hd;
        return out;
    }
    return Q * z;
}

Matrix QpProblem::dense_hessian() const {
    if (!paired_block) return Q;
    const auto k = paired_block->rows();
    Matrix out(2 * k, 2 * k);
    out << *paired_block, -*paired_block, -*paired_block, *paired_block;
    return out;
}

double QpProblem::objective(const Vector& z) const { return 0.5 * z.dot(hessian_times(z)) + q.dot(z); }

void QpProblem::validate() const {
    const auto n = q.size();
    if (paired_block) {
        if (paired_block->rows() != paired_block->cols() || 2 * paired_block->rows() != n)
            throw DimensionError("paired QP block must be square with half the variable count");
    } else if (Q.rows() != n || Q.cols() != n) {
        throw DimensionError("QP Hessian must be n x n");
    }
    if (lower.size() != n || upper.size() != n) throw DimensionError("QP bounds must have length n");
    if (Aeq.rows() > 0 && Aeq.cols() != n) throw DimensionError("QP equality matrix must have n columns");
    if (beq.size() != Aeq.rows()) throw DimensionError("QP equality right-hand side length mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(lower(i)) || !std::isfinite(upper(i))) throw DimensionError("QP bounds must be finite");
        if (lower(i) > upper(i)) throw DimensionError("QP lower bound exceeds upper bound");
    }
    const Matrix& h = paired_block ? *paired_block : Q;
    const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * std::max(1.0, h.cwiseAbs().maxCoeff())) throw DimensionError("QP Hessian must be symmetric");
}

std::string to_string(QpStatus s) {
    switch (s) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::MaxIter: return "max_iter";
        case QpStatus::Infeasible: return "infeasible";
    }
    return "unknown";
}

double kkt_residual(const QpProblem& p, const QpSolution& s) {
    const Vector qz = p.hessian_times(s.z);
    Vector rd = qz + p.q - s.lower_multipliers + s.upper_multipliers;
    if (p.equalities() > 0) rd += p.Aeq.transpose() * s.eq_multipliers;
    const double dual_scale = 1.0 + std::max(p.q.lpNorm<Eigen::Infinity>(), qz.lpNorm<Eigen::Infinity>());
    double res = rd.lpNorm<Eigen::Infinity>() / dual_scale;
    if (p.equalities() > 0) {
        const double primal_scale = 1.0 + p.beq.lpNorm<Eigen::Infinity>();
        res = std::max(res, (p.Aeq * s.z - p.beq).lpNorm<Eigen::Infinity>() / primal_scale);
    }
    const double compl_sum = (s.z - p.lower).cwiseProduct(s.lower_multipliers).cwiseAbs().sum() +
                             (p.upper - s.z).cwiseProduct(s.upper_multipliers).cwiseAbs().sum();
    res = std::max(res, compl_sum / (1.0 + std::abs(p.objective(s.z))));
    return res;
}

namespace {

// Factorization of Q + diag(d), exploiting the paired structure when present.
class KktFactor {
public:
    explicit KktFactor(const QpProblem& p) : p_(p) {}

    bool factor(const Vector& d) {
        d_ = d;
        if (p_.paired_block) {
            const auto k = p_.paired_block->rows();
            da_ = d.head(k);
            db_ = d.tail(k);
            const Vector omega = da_.cwiseProduct(db_).cwiseQuotient(da_ + db_);
            Matrix m = *p_.paired_block;
            m.diagonal() += omega;
            return factor_with_jitter(m);
        }
        Matrix m = p_.Q;
        m.diagonal() += d;
        return factor_with_jitter(m);
    }

    Matrix solve(const Matrix& rhs) const {
        Matrix x = solve_once(rhs);
        // One step of iterative refinement against the unreduced operator.
        const Matrix r = rhs - apply(x);
        x += solve_once(r);
        return x;
    }

private:
    bool factor_with_jitter(Matrix& m) {
        const double base = std::max(1e-300, m.diagonal().cwiseAbs().mean());
        double jitter = 0.0;
        for (int attempt = 0; attempt < 10; ++attempt) {
            if (jitter > 0.0) m.diagonal().array() += jitter - last_jitter_;
            last_jitter_ = jitter;
            llt_.compute(m);
            if (llt_.info() == Eigen::Success) return true;
            jitter = jitter == 0.0 ? 1e-12 * base : jitter * 100.0;
        }
        return false;
    }

    Matrix apply(const Matrix& x) const {
        Matrix out(x.rows(), x.cols());
        for (Eigen::Index c = 0; c < x.cols(); ++c) out.col(c) = p_.hessian_times(x.col(c)) + d_.cwiseProduct(x.col(c));
        return out;
    }

    Matrix solve_once(const Matrix& rhs) const {
        if (!p_.paired_block) return llt_.solve(rhs);
        const auto k = p_.paired_block->rows();
        Matrix out(2 * k, rhs.cols());
        for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
            const Vector r1 = rhs.col(c).head(k);
            const Vector r2 = rhs.col(c).tail(k);
            const Vector s = r1 + r2;
            const Vector g = llt_.solve(r1 + *p_.paired_block * s.cwiseQuotient(db_));
            const Vector x = db_.cwiseProduct(g).cwiseQuotient(da_ + db_);
            out.col(c).head(k) = x;
            out.col(c).tail(k) = (s - da_.cwiseProduct(x)).cwiseQuotient(db_);
        }
        return out;
    }

    const QpProblem& p_;
    Vector d_, da_, db_;
    Eigen::LLT<Matrix> llt_;
    double last_jitter_ = 0.0;
};

double max_step(const Vector& w, const Vector& dw) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (dw(i) < 0.0) a = std::min(a, -w(i) / dw(i));
    }
    return a;
}

struct IpmResult {
    Vector z, mu, ll, lu;
    int iterations = 0;
    bool converged = false;
    bool factor_failed = false;
};

// Core IPM on a problem with strictly positive box widths. `unit` is the size of one
// original objective unit after internal scaling.
IpmResult run_ipm(const QpProblem& p, double tol, int max_iter, double unit = 1.0) {
    const auto n = p.size();
    const auto me = p.equalities();
    const Vector width = p.upper - p.lower;

    IpmResult r;
    r.z = (Vector::Zero(n).cwiseMax(p.lower + 0.05 * width)).cwiseMin(p.upper - 0.05 * width);
    r.mu = Vector::Zero(me);
    r.ll = Vector::Ones(n);
    r.lu = Vector::Ones(n);

    const double q_norm = p.q.lpNorm<Eigen::Infinity>();
    const double b_norm = me > 0 ? p.beq.lpNorm<Eigen::Infinity>() : 0.0;
    KktFactor kkt(p);
    IpmResult best = r;
    double best_merit = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int it = 0; it < max_iter; ++it) {
        r.iterations = it;
        const Vector wl = r.z - p.lower;
        const Vector wu = p.upper - r.z;
        const Vector qz = p.hessian_times(r.z);
        Vector rd = qz + p.q - r.ll + r.lu;
        if (me > 0) rd += p.Aeq.transpose() * r.mu;
        const Vector rp = me > 0 ? Vector(p.Aeq * r.z - p.beq) : Vector(0);

        const double compl_sum = wl.dot(r.ll) + wu.dot(r.lu);
        const double obj = 0.5 * r.z.dot(qz) + p.q.dot(r.z);
        const double dual_res = rd.lpNorm<Eigen::Infinity>() / (1.0 + std::max(q_norm, qz.lpNorm<Eigen::Infinity>()));
        const double primal_res = me > 0 ? rp.lpNorm<Eigen::Infinity>() / (1.0 + b_norm) : 0.0;
        double dual_obj = -0.5 * r.z.dot(qz) + r.ll.dot(p.lower) - r.lu.dot(p.upper);
        if (me > 0) dual_obj -= p.beq.dot(r.mu);
        const double gap_tol = tol * (unit + std::abs(obj));
        if (dual_res <= tol && primal_res <= tol && compl_sum <= gap_tol && std::abs(obj - dual_obj) <= gap_tol) {
            r.converged = true;
            return r;
        }
        const double merit = std::max({dual_res / tol, primal_res / tol, compl_sum / gap_tol, std::abs(obj - dual_obj) / gap_tol});
        if (!std::isfinite(merit)) return best;
        if (merit < 0.9 * best_merit) {
            best_merit = merit;
            best = r;
            since_best = 0;
        } else if (merit < best_merit) {
            best_merit = merit;
            best = r;
        }
        if (++since_best > 8) return best;  // stalled at the rounding floor
        const double mu_avg = compl_sum / (2.0 * static_cast<double>(n));
#ifdef PSDMAP_QP_TRACE
        std::fprintf(stderr, "it %d dual %.3e primal %.3e compl %.3e gap %.3e obj %.6e\n", it, dual_res, primal_res, compl_sum, obj - dual_obj, obj);
#endif

        const Vector d = r.ll.cwiseQuotient(wl) + r.lu.cwiseQuotient(wu);
        if (!kkt.factor(d)) {
            r.factor_failed = true;
            return r;
        }

        Matrix ht_inv_at;  // H^{-1} A^T
        Eigen::LDLT<Matrix> schur;
        if (me > 0) {
            ht_inv_at = kkt.solve(p.Aeq.transpose());
            Matrix s = p.Aeq * ht_inv_at;
            s = 0.5 * (s + s.transpose());
            s.diagonal().array() += 1e-14 * std::max(1.0, s.diagonal().cwiseAbs().maxCoeff());
            schur.compute(s);
        }

        auto newton = [&](const Vector& rcl, const Vector& rcu, Vector& dz, Vector& dmu, Vector& dll, Vector& dlu) {
            const Vector g = -rd + rcl.cwiseQuotient(wl) - rcu.cwiseQuotient(wu);
            // Block elimination of [H A^T; A 0][dz; dmu] = [g; -rp].
            auto block_solve = [&](const Vector& top, const Vector& bottom, Vector& x, Vector& y) {
                const Vector ht = kkt.solve(top);
                if (me > 0) {
                    y = schur.solve(p.Aeq * ht - bottom);
                    x = ht - ht_inv_at * y;
                } else {
                    y = Vector(0);
                    x = ht;
                }
            };
            const Vector minus_rp = me > 0 ? Vector(-rp) : Vector(0);
            block_solve(g, minus_rp, dz, dmu);
            if (me > 0) {
                // Refinement against the augmented system; the Schur complement loses accuracy
                // once the barrier diagonal spans many orders of magnitude.
                for (int pass = 0; pass < 3; ++pass) {
                    const Vector r_top = g - p.hessian_times(dz) - d.cwiseProduct(dz) - p.Aeq.transpose() * dmu;
                    const Vector r_bot = minus_rp - p.Aeq * dz;
                    if (r_top.lpNorm<Eigen::Infinity>() + r_bot.lpNorm<Eigen::Infinity>() <=
                        1e-14 * (1.0 + g.lpNorm<Eigen::Infinity>() + minus_rp.lpNorm<Eigen::Infinity>()))
                        break;
                    Vector cx, cy;
                    block_solve(r_top, r_bot, cx, cy);
                    dz += cx;
                    dmu += cy;
                }
            }
            dll = (rcl - r.ll.cwiseProduct(dz)).cwiseQuotient(wl);
            dlu = (rcu + r.lu.cwiseProduct(dz)).cwiseQuotient(wu);
        };

        auto step_length = [&](const Vector& dz, const Vector& dll, const Vector& dlu) {
            double a = max_step(wl, dz);
            a = std::min(a, max_step(wu, -dz));
            a = std::min(a, max_step(r.ll, dll));
            a = std::min(a, max_step(r.lu, dlu));
            return a;
        };

        // Predictor.
        Vector dz, dmu, dll, dlu;
        newton(-wl.cwiseProduct(r.ll), -wu.cwiseProduct(r.lu), dz, dmu, dll, dlu);
        const double a_aff = step_length(dz, dll, dlu);
        const double compl_aff = (wl + a_aff * dz).dot(r.ll + a_aff * dll) + (wu - a_aff * dz).dot(r.lu + a_aff * dlu);
        const double mu_aff = compl_aff / (2.0 * static_cast<double>(n));
        const double sigma = std::pow(std::clamp(mu_aff / std::max(mu_avg, 1e-300), 0.0, 1.0), 3);
        // Never aim for complementarity far below what termination asks for.
        const double target = std::max(sigma * mu_avg, 0.01 * gap_tol / (2.0 * static_cast<double>(n)));

        // Corrector.
        const Vector rcl = Vector::Constant(n, target) - wl.cwiseProduct(r.ll) - dz.cwiseProduct(dll);
        const Vector rcu = Vector::Constant(n, target) - wu.cwiseProduct(r.lu) + dz.cwiseProduct(dlu);
        newton(rcl, rcu, dz, dmu, dll, dlu);
        const double a = std::min(1.0, 0.995 * step_length(dz, dll, dlu));
        if (!dz.allFinite() || !dll.allFinite() || !dlu.allFinite() || !std::isfinite(a)) return best;

        r.z += a * dz;
        if (me > 0) r.mu += a * dmu;
        r.ll += a * dll;
        r.lu += a * dlu;
        r.iterations = it + 1;
        best.iterations = r.iterations;
    }
    return best_merit < std::numeric_limits<double>::infinity() ? best : r;
}

// Projected gradient for box-only problems, used when factorization keeps failing.
IpmResult projected_gradient(const QpProblem& p, double tol, int max_iter) {
    const auto n = p.size();
    IpmResult r;
    r.z = Vector::Zero(n).cwiseMax(p.lower).cwiseMin(p.upper);
    r.mu = Vector(0);
    const Matrix h = p.dense_hessian();
    const double lip = std::max(1e-300, Eigen::SelfAdjointEigenSolver<Matrix>(h, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff());
    const int iters = std::max(1000, 100 * max_iter);
    for (int it = 0; it < iters; ++it) {
        const Vector g = h * r.z + p.q;
        const Vector next = (r.z - g / lip).cwiseMax(p.lower).cwiseMin(p.upper);
        const double change = (next - r.z).lpNorm<Eigen::Infinity>();
        r.z = next;
        r.iterations = it + 1;
        if (change <= tol * (1.0 + r.z.lpNorm<Eigen::Infinity>())) {
            r.converged = true;
            break;
        }
    }
    const Vector g = h * r.z + p.q;
    r.ll = g.cwiseMax(0.0);
    r.lu = (-g).cwiseMax(0.0);
    return r;
}

QpSolution finish(const QpProblem& p, Vector z, Vector mu, Vector ll, Vector lu, int iterations, QpStatus status) {
    QpSolution s;
    s.z = std::move(z);
    s.eq_multipliers = std::move(mu);
    s.lower_multipliers = std::move(ll);
    s.upper_multipliers = std::move(lu);
    s.iterations = iterations;
    s.status = status;
    const Vector qz = p.hessian_times(s.z);
    s.objective = 0.5 * s.z.dot(qz) + p.q.dot(s.z);
    s.dual_objective = -0.5 * s.z.dot(qz) + s.lower_multipliers.dot(p.lower) - s.upper_multipliers.dot(p.upper);
    if (p.equalities() > 0) s.dual_objective -= p.beq.dot(s.eq_multipliers);
    s.kkt_residual = kkt_residual(p, s);
    return s;
}

// Minimal ||A z - b||^2 over the box; large values prove the equality system infeasible.
bool equality_feasible(const QpProblem& p, double tol) {
    QpProblem phase1;
    phase1.Q = p.Aeq.transpose() * p.Aeq;
    phase1.q = -p.Aeq.transpose() * p.beq;
    phase1.lower = p.lower;
    phase1.upper = p.upper;
    phase1.Aeq = Matrix(0, p.size());
    phase1.beq = Vector(0);
    const IpmResult r = run_ipm(phase1, tol, 200);
    const double resid = (p.Aeq * r.z - p.beq).lpNorm<Eigen::Infinity>();
    return resid <= std::sqrt(tol) * (1.0 + p.beq.lpNorm<Eigen::Infinity>());
}

}  // namespace

QpSolution solve_qp(const QpProblem& p, double tol, int max_iter) {
    p.validate();
    const auto n = p.size();
    const auto me = p.equalities();

    // Split off fixed variables (lower == upper).
    std::vector<Eigen::Index> free_idx, fixed_idx;
    for (Eigen::Index i = 0; i < n; ++i) (p.upper(i) > p.lower(i) ? free_idx : fixed_idx).push_back(i);

    // Scale the objective and the equality rows; the solution is unchanged and multipliers are unscaled below.
    const Matrix& hb = p.paired_block ? *p.paired_block : p.Q;
    double obj_scale = std::max(hb.size() ? hb.cwiseAbs().maxCoeff() : 0.0, p.q.size() ? p.q.cwiseAbs().maxCoeff() : 0.0);
    obj_scale = obj_scale > 0.0 ? 1.0 / obj_scale : 1.0;

    QpProblem s;
    std::vector<Eigen::Index> kept_rows;
    Vector row_scale = Vector::Ones(me);
    for (Eigen::Index i = 0; i < me; ++i) {
        const double rmax = p.Aeq.row(i).cwiseAbs().maxCoeff();
        if (rmax == 0.0) {
            if (std::abs(p.beq(i)) > tol * (1.0 + std::abs(p.beq(i)))) {
                Vector z = p.lower;
                return finish(p, z, Vector::Zero(me), Vector::Zero(n), Vector::Zero(n), 0, QpStatus::Infeasible);
            }
            continue;
        }
        row_scale(i) = 1.0 / rmax;
        kept_rows.push_back(i);
    }

    const bool all_free = fixed_idx.empty();
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    Vector z_fixed = Vector::Zero(n);
    for (auto i : fixed_idx) z_fixed(i) = p.lower(i);

    Matrix a_full(static_cast<Eigen::Index>(kept_rows.size()), n);
    Vector b_full(static_cast<Eigen::Index>(kept_rows.size()));
    for (std::size_t r = 0; r < kept_rows.size(); ++r) {
        const auto i = kept_rows[r];
        a_full.row(static_cast<Eigen::Index>(r)) = p.Aeq.row(i) * row_scale(i);
        b_full(static_cast<Eigen::Index>(r)) = p.beq(i) * row_scale(i);
    }

    if (all_free) {
        if (p.paired_block) s.paired_block = *p.paired_block * obj_scale;
        else s.Q = p.Q * obj_scale;
        s.q = p.q * obj_scale;
        s.lower = p.lower;
        s.upper = p.upper;
        s.Aeq = a_full;
        s.beq = b_full;
    } else {
        const Matrix h = p.dense_hessian();
        const Vector shift = h * z_fixed;
        s.Q.resize(nf, nf);
        s.q.resize(nf);
        s.lower.resize(nf);
        s.upper.resize(nf);
        s.Aeq.resize(a_full.rows(), nf);
        for (Eigen::Index i = 0; i < nf; ++i) {
            const auto gi = free_idx[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < nf; ++j) s.Q(i, j) = h(gi, free_idx[static_cast<std::size_t>(j)]) * obj_scale;
            s.q(i) = (p.q(gi) + shift(gi)) * obj_scale;
            s.lower(i) = p.lower(gi);
            s.upper(i) = p.upper(gi);
            s.Aeq.col(i) = a_full.col(gi);
        }
        s.beq = b_full - a_full * z_fixed;
    }

    IpmResult r;
    QpStatus status = QpStatus::MaxIter;
    if (nf == 0) {
        r.z = Vector(0);
        r.mu = Vector::Zero(s.Aeq.rows());
        r.ll = r.lu = Vector(0);
        r.converged = s.beq.lpNorm<Eigen::Infinity>() <= tol;
        status = r.converged ? QpStatus::Optimal : QpStatus::Infeasible;
    } else {
        r = run_ipm(s, tol, max_iter, obj_scale);
        if (r.factor_failed && s.Aeq.rows() == 0) r = projected_gradient(s, tol, max_iter);
        if (r.converged) {
            status = QpStatus::Optimal;
        } else if (s.Aeq.rows() > 0 && !equality_feasible(s, tol)) {
            status = QpStatus::Infeasible;
        }
    }

    // Map back to the original variables and scaling.
    Vector z = z_fixed;
    for (Eigen::Index i = 0; i < nf; ++i) z(free_idx[static_cast<std::size_t>(i)]) = r.z(i);
    Vector mu = Vector::Zero(me);
    for (std::size_t k = 0; k < kept_rows.size(); ++k) {
        const auto i = kept_rows[k];
        mu(i) = r.mu(static_cast<Eigen::Index>(k)) * row_scale(i) / obj_scale;
    }
    Vector ll = Vector::Zero(n), lu = Vector::Zero(n);
    for (Eigen::Index i = 0; i < nf; ++i) {
        ll(free_idx[static_cast<std::size_t>(i)]) = r.ll(i) / obj_scale;
        lu(free_idx[static_cast<std::size_t>(i)]) = r.lu(i) / obj_scale;
    }
    if (!fixed_idx.empty()) {
        Vector g = p.hessian_times(z) + p.q;
        if (me > 0) g += p.Aeq.transpose() * mu;
        for (auto i : fixed_idx) {
            ll(i) = std::max(0.0, g(i));
            lu(i) = std::max(0.0, -g(i));
        }
    }
    return finish(p, std::move(z), std::move(mu), std::move(ll), std::move(lu), r.iterations, status);
}

}  // namespace psdmap
