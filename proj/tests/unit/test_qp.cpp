#include "doctest.h"
#include "test_helpers.hpp"

#include "psdmap/qp.hpp"

#include <cmath>
#include <limits>

using namespace psdmap;

namespace {

QpProblem box_problem(Matrix q_mat, Vector q, Vector lo, Vector hi) {
    QpProblem p;
    p.Q = std::move(q_mat);
    p.q = std::move(q);
    p.lower = std::move(lo);
    p.upper = std::move(hi);
    p.Aeq = Matrix(0, p.q.size());
    p.beq = Vector(0);
    return p;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

// Exhaustive active-set enumeration: every variable is at its lower bound, at its upper
// bound, or free; the free subproblem is an equality-constrained QP solved by least squares.
double enumerate_optimum(const QpProblem& p) {
    const auto n = p.size();
    const auto me = p.equalities();
    const Matrix h = p.dense_hessian();
    double best = std::numeric_limits<double>::infinity();
    long total = 1;
    for (Eigen::Index i = 0; i < n; ++i) total *= 3;
    for (long code = 0; code < total; ++code) {
        long c = code;
        Vector z = Vector::Zero(n);
        std::vector<Eigen::Index> freev;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int s = static_cast<int>(c % 3);
            c /= 3;
            if (s == 0) z(i) = p.lower(i);
            else if (s == 1) z(i) = p.upper(i);
            else freev.push_back(i);
        }
        const auto nf = static_cast<Eigen::Index>(freev.size());
        if (nf > 0) {
            Matrix kkt = Matrix::Zero(nf + me, nf + me);
            Vector rhs(nf + me);
            const Vector g = h * z + p.q;  // gradient with free entries at 0
            for (Eigen::Index a = 0; a < nf; ++a) {
                for (Eigen::Index b = 0; b < nf; ++b) kkt(a, b) = h(freev[a], freev[b]);
                for (Eigen::Index r = 0; r < me; ++r) kkt(a, nf + r) = kkt(nf + r, a) = p.Aeq(r, freev[a]);
                rhs(a) = -g(freev[a]);
            }
            if (me > 0) rhs.tail(me) = p.beq - p.Aeq * z;
            Eigen::CompleteOrthogonalDecomposition<Matrix> cod(kkt);
            const Vector sol = cod.solve(rhs);
            if ((kkt * sol - rhs).norm() > 1e-8 * (1.0 + rhs.norm())) continue;
            for (Eigen::Index a = 0; a < nf; ++a) z(freev[a]) = sol(a);
        }
        bool ok = true;
        for (Eigen::Index i = 0; i < n && ok; ++i) ok = z(i) >= p.lower(i) - 1e-9 && z(i) <= p.upper(i) + 1e-9;
        if (ok && me > 0) ok = (p.Aeq * z - p.beq).lpNorm<Eigen::Infinity>() <= 1e-8;
        if (ok) best = std::min(best, p.objective(z));
    }
    return best;
}

Matrix random_psd(CounterRng& rng, Eigen::Index n, Eigen::Index rank) {
    const Matrix g = testutil::random_matrix(rng, n, rank);
    return g * g.transpose();
}

}  // namespace

TEST_CASE("solve_qp examples") {
    auto s = solve_qp(box_problem(Matrix::Identity(1, 1), vec({-1}), vec({0}), vec({2})));
    CHECK(s.status == QpStatus::Optimal);
    CHECK(s.z(0) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(s.objective == doctest::Approx(-0.5).epsilon(1e-7));

    s = solve_qp(box_problem(Matrix::Identity(1, 1), vec({-10}), vec({0}), vec({2})));
    CHECK(s.status == QpStatus::Optimal);
    CHECK(s.z(0) == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(s.upper_multipliers(0) == doctest::Approx(8.0).epsilon(1e-6));
}

TEST_CASE("equality multiplier sign convention") {
    // Hand-solved KKT: z = (1/2, 1/2) strictly inside the box, so Qz + q + A^T mu = 0
    // gives 1/2 + mu = 0.
    QpProblem p = box_problem(Matrix::Identity(2, 2), Vector::Zero(2), Vector::Zero(2), Vector::Ones(2));
    p.Aeq = Matrix::Ones(1, 2);
    p.beq = vec({1});
    const auto s = solve_qp(p);
    CHECK(s.status == QpStatus::Optimal);
    CHECK(s.z(0) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s.z(1) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s.eq_multipliers(0) == doctest::Approx(-0.5).epsilon(1e-6));
    const Vector stat = p.Q * s.z + p.q + p.Aeq.transpose() * s.eq_multipliers - s.lower_multipliers + s.upper_multipliers;
    CHECK(stat.lpNorm<Eigen::Infinity>() <= 1e-7);
}

TEST_CASE("infeasible equality system") {
    QpProblem p = box_problem(Matrix::Identity(2, 2), Vector::Zero(2), Vector::Zero(2), Vector::Ones(2));
    p.Aeq = Matrix::Ones(1, 2);
    p.beq = vec({3});
    CHECK(solve_qp(p).status == QpStatus::Infeasible);
    p.Aeq = Matrix::Zero(1, 2);
    p.beq = vec({1});
    CHECK(solve_qp(p).status == QpStatus::Infeasible);
}

TEST_CASE("invalid problems are rejected") {
    QpProblem p = box_problem(Matrix::Identity(2, 2), Vector::Zero(2), Vector::Ones(2), Vector::Zero(2));
    CHECK_THROWS_AS(solve_qp(p), DimensionError);
    Matrix asym(2, 2);
    asym << 1, 0.5, 0, 1;
    CHECK_THROWS_AS(solve_qp(box_problem(asym, Vector::Zero(2), Vector::Zero(2), Vector::Ones(2))), DimensionError);
}

TEST_CASE("active-set enumeration oracle on random instances") {
    CounterRng rng(41, Stream::Generic);
    for (int inst = 0; inst < 30; ++inst) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(9));  // up to 10
        const Eigen::Index rank = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        const Eigen::Index me = static_cast<Eigen::Index>(rng.below(3));
        QpProblem p = box_problem(random_psd(rng, n, rank), testutil::random_vector(rng, n), Vector(n), Vector(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            p.lower(i) = -rng.uniform();
            p.upper(i) = rng.uniform();
        }
        p.Aeq = testutil::random_matrix(rng, me, n);
        // Right-hand side from an interior point keeps the instance feasible.
        Vector z0(n);
        for (Eigen::Index i = 0; i < n; ++i) z0(i) = p.lower(i) + rng.uniform() * (p.upper(i) - p.lower(i));
        p.beq = p.Aeq * z0;

        const auto s = solve_qp(p, 1e-9);
        CAPTURE(inst);
        REQUIRE(s.status == QpStatus::Optimal);
        CHECK(s.objective == doctest::Approx(enumerate_optimum(p)).epsilon(1e-6).scale(1.0));
        CHECK((s.z - p.lower).minCoeff() >= -1e-9);
        CHECK((p.upper - s.z).minCoeff() >= -1e-9);
        CHECK(s.kkt_residual <= 1e-8);
        CHECK(s.objective - s.dual_objective <= 10 * 1e-9);
        CHECK(s.objective - s.dual_objective >= -1e-8);
    }
}

TEST_CASE("duality gap within 10 tol at default tolerance") {
    CounterRng rng(42, Stream::Generic);
    for (int inst = 0; inst < 20; ++inst) {
        const Eigen::Index n = 20;
        QpProblem p = box_problem(random_psd(rng, n, 12), testutil::random_vector(rng, n), -Vector::Ones(n), Vector::Ones(n));
        p.Aeq = testutil::random_matrix(rng, 2, n);
        p.beq = p.Aeq * (0.3 * testutil::random_vector(rng, n)).cwiseMax(-0.9).cwiseMin(0.9);
        const auto s = solve_qp(p);
        REQUIRE(s.status == QpStatus::Optimal);
        CHECK(s.objective - s.dual_objective <= 10 * 1e-8);
    }
}

TEST_CASE("paired structure gives the dense answer") {
    CounterRng rng(43, Stream::Generic);
    for (int inst = 0; inst < 10; ++inst) {
        const Eigen::Index k = 6;
        const Matrix h = random_psd(rng, k, 4);
        const Vector q = testutil::random_vector(rng, 2 * k);
        const Matrix a0 = testutil::random_matrix(rng, 2, k);
        Matrix aeq(2, 2 * k);
        aeq << a0, -a0;
        const auto paired = QpProblem::paired(h, q, Vector::Zero(2 * k), Vector::Ones(2 * k), aeq, Vector::Zero(2));
        QpProblem dense = paired;
        dense.Q = paired.dense_hessian();
        dense.paired_block.reset();
        const auto sp = solve_qp(paired, 1e-10);
        const auto sd = solve_qp(dense, 1e-10);
        REQUIRE(sp.status == QpStatus::Optimal);
        REQUIRE(sd.status == QpStatus::Optimal);
        CHECK(sp.objective == doctest::Approx(sd.objective).epsilon(1e-8));
        CHECK(sp.objective == doctest::Approx(enumerate_optimum(dense)).epsilon(1e-6));
    }
}

TEST_CASE("fixed variables and linear objectives") {
    QpProblem p = box_problem(Matrix::Identity(3, 3), vec({-1, -1, -1}), vec({0, 0.25, 0}), vec({2, 0.25, 2}));
    p.Aeq = Matrix::Ones(1, 3);
    p.beq = vec({1.25});
    const auto s = solve_qp(p);
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK(s.z(1) == 0.25);
    CHECK(s.z(0) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s.kkt_residual <= 1e-7);

    const auto lp = solve_qp(box_problem(Matrix::Zero(2, 2), vec({1, -1}), vec({-1, -1}), vec({1, 1})));
    REQUIRE(lp.status == QpStatus::Optimal);
    CHECK(lp.z(0) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(lp.z(1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("Hessian PSD only up to rounding") {
    CounterRng rng(44, Stream::Generic);
    Matrix q = random_psd(rng, 8, 3);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(q);
    Vector ev = eig.eigenvalues();
    ev(0) = -1e-12 * ev.maxCoeff();
    q = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    q = 0.5 * (q + q.transpose());
    const auto p = box_problem(q, testutil::random_vector(rng, 8), -Vector::Ones(8), Vector::Ones(8));
    const auto s = solve_qp(p);
    CHECK(s.status == QpStatus::Optimal);
    CHECK(s.objective == doctest::Approx(enumerate_optimum(p)).epsilon(1e-6));
}

TEST_CASE("solutions are deterministic") {
    CounterRng rng(45, Stream::Generic);
    QpProblem p = box_problem(random_psd(rng, 10, 5), testutil::random_vector(rng, 10), -Vector::Ones(10), Vector::Ones(10));
    const auto a = solve_qp(p);
    const auto b = solve_qp(p);
    CHECK(a.z == b.z);
    CHECK(a.iterations == b.iterations);
}
