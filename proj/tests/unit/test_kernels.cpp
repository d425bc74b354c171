#include "doctest.h"
#include "test_helpers.hpp"

#include "psdmap/kernels.hpp"

#include <cmath>

using namespace psdmap;
using testutil::max_abs;

TEST_CASE("tps_radial") {
    CHECK(tps_radial(0.0, 2, 2) == 0.0);
    CHECK(tps_radial(std::exp(1.0), 2, 2) == doctest::Approx(std::exp(2.0)));
    CHECK(tps_radial(4.0, 2, 1) == doctest::Approx(64.0));
    CHECK(tps_radial(1.0, 2, 2) == 0.0);
    CHECK_THROWS_AS(tps_radial(1.0, 1, 2), DimensionError);
    CHECK_THROWS_AS(tps_radial(-1.0, 2, 1), DimensionError);
}

TEST_CASE("kernel_block examples") {
    const auto g = KernelSpec::diagonal_gaussian({0.1, 0.5, 2.0});
    const Location x{0.3, 0.4};
    CHECK(max_abs(kernel_block(g, x, x) - Matrix::Identity(3, 3)) == 0.0);

    const auto tps1 = KernelSpec::tps(2, 1, 2);
    const Matrix b = kernel_block(tps1, Location{0.0}, Location{2.0});
    CHECK(b(0, 0) == doctest::Approx(8.0));
    CHECK(b(1, 1) == doctest::Approx(8.0));
    CHECK(b(0, 1) == 0.0);

    const auto tps_sq = KernelSpec::tps(2, 1, 1, TpsArgument::SquaredDistance);
    CHECK(kernel_block(tps_sq, Location{0.0}, Location{std::sqrt(2.0)})(0, 0) == doctest::Approx(8.0));

    const auto tps2 = KernelSpec::tps(2, 2, 1);
    CHECK(kernel_block(tps2, Location{0.0, 0.0}, Location{1.0, 0.0})(0, 0) == 0.0);

    CHECK_THROWS_AS(kernel_block(g, Location{0.0}, Location{0.0, 1.0}), DimensionError);
    CHECK_THROWS_AS(kernel_block(tps1, Location{0.0, 0.0}, Location{1.0, 0.0}), DimensionError);
    CHECK_THROWS_AS(KernelSpec::diagonal_gaussian({1.0, 0.0}), DimensionError);
    CHECK_THROWS_AS(KernelSpec::tps(1, 2, 1), DimensionError);
}

TEST_CASE("kernel_block symmetry on random pairs") {
    CounterRng rng(21, Stream::Generic);
    const std::vector<KernelSpec> specs{KernelSpec::diagonal_gaussian({0.05, 0.3}), KernelSpec::tps(2, 2, 2),
                                        KernelSpec::gaussian(0.2, 2)};
    for (const auto& s : specs) {
        for (int t = 0; t < 50; ++t) {
            const auto pts = testutil::random_locations(rng, 2, 2);
            CHECK(max_abs(kernel_block(s, pts[0], pts[1]) - kernel_block(s, pts[1], pts[0]).transpose()) == 0.0);
        }
    }
}

TEST_CASE("assemble_kernel forms") {
    const auto g = KernelSpec::diagonal_gaussian({0.2, 0.7});
    const auto one = assemble_kernel(g, {Location{0.5}});
    CHECK(max_abs(one.to_dense() - Matrix::Identity(2, 2)) == 0.0);

    const auto coincident = assemble_kernel(g, {Location{0.5}, Location{0.5}}).to_dense();
    CHECK(max_abs(coincident.block(0, 0, 2, 2) - coincident.block(2, 2, 2, 2)) == 0.0);
    CHECK(max_abs(coincident.block(0, 0, 2, 2) - coincident.block(0, 2, 2, 2)) == 0.0);
    Eigen::FullPivLU<Matrix> lu(coincident);
    CHECK(lu.rank() == 2);
    CHECK_THROWS_AS(assemble_kernel(g, {}), DimensionError);
}

TEST_CASE("separable kernel equals the explicit Kronecker product") {
    CounterRng rng(22, Stream::Generic);
    for (int t = 0; t < 20; ++t) {
        const int n = 3 + static_cast<int>(rng.below(4));
        const int m = 1 + static_cast<int>(rng.below(3));
        const auto pts = testutil::random_locations(rng, n, 2);
        const auto spec = KernelSpec::gaussian(0.3, m);
        const auto km = assemble_kernel(spec, pts);
        REQUIRE(km.is_separable());
        const Matrix dense = km.to_dense();
        // Explicit entrywise Kronecker product.
        for (int i = 0; i < n * m; ++i) {
            for (int j = 0; j < n * m; ++j) {
                const double want = (i % m == j % m) ? (*km.scalar)(i / m, j / m) : 0.0;
                CHECK(std::abs(dense(i, j) - want) <= 1e-12);
            }
        }
        CHECK(max_abs(dense - assemble_kernel_dense(spec, pts)) <= 1e-12);
        CHECK(max_abs(dense - dense.transpose()) <= 1e-12);
    }
}

TEST_CASE("diagonal Gaussian Gram matrices are PSD") {
    CounterRng rng(23, Stream::Generic);
    for (int n : {2, 5, 12, 30}) {
        const auto pts = testutil::random_locations(rng, n, 2);
        const Matrix k = assemble_kernel_dense(KernelSpec::diagonal_gaussian({0.05, 0.4, 1.5}), pts);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-9 * eig.eigenvalues().maxCoeff());
        Matrix jittered = k;
        jittered.diagonal().array() += 1e-10 * k.trace() / static_cast<double>(k.rows());
        CHECK(Eigen::LLT<Matrix>(jittered).info() == Eigen::Success);
    }
}

TEST_CASE("assemble_basis_matrix examples") {
    const Matrix b = assemble_basis_matrix(BasisSpec::tps_polynomial(1), {Location{0.0}, Location{1.0}}, 1);
    Matrix want(2, 2);
    want << 1, 0, 1, 1;
    CHECK(max_abs(b - want) == 0.0);

    CHECK(assemble_basis_matrix(BasisSpec::none(), {Location{0.0}, Location{1.0}}, 3).cols() == 0);

    const Location chi{0.2, 0.8};
    const auto pl = BasisSpec::pathloss({chi, Location{0.4, 0.5}}, 3.0, 1.0);
    const Matrix blk = assemble_basis_matrix(pl, {chi}, 3);
    CHECK(blk(0, 0) == doctest::Approx(1.0));
    CHECK(blk(2, 2) == 0.0);
    CHECK(blk(1, 1) == doctest::Approx(1.0 / (1.0 + std::pow(std::hypot(0.2, 0.3), 3.0))));
    CHECK_THROWS_AS(assemble_basis_matrix(pl, {chi}, 2), DimensionError);
}

TEST_CASE("projector examples and properties") {
    Matrix b(2, 1);
    b << 1, 1;
    Matrix want = Matrix::Identity(2, 2) - 0.5 * Matrix::Ones(2, 2);
    CHECK(max_abs(projector(b) - want) <= 1e-15);

    CounterRng rng(24, Stream::Generic);
    const Matrix sq = testutil::random_matrix(rng, 4, 4);
    CHECK(max_abs(projector(sq)) <= 1e-10);

    for (int t = 0; t < 20; ++t) {
        const Matrix tall = testutil::random_matrix(rng, 12, 3);
        const Matrix p = projector(tall);
        CHECK(max_abs(p * p - p) <= 1e-10);
        CHECK(max_abs(p - p.transpose()) <= 1e-10);
        CHECK(max_abs(p * tall) <= 1e-10);
    }

    Matrix singular(3, 2);
    singular << 1, 2, 1, 2, 1, 2;
    try {
        projector(singular, "my_basis");
        FAIL("expected SolverError");
    } catch (const SolverError& e) {
        CHECK(std::string(e.what()).find("my_basis") != std::string::npos);
    }
}

TEST_CASE("cpd_check") {
    CounterRng rng(25, Stream::Generic);
    for (int d : {1, 2}) {
        for (int inst = 0; inst < 5; ++inst) {
            const auto pts = testutil::random_locations(rng, 10, d);
            CHECK(cpd_check(KernelSpec::tps(2, d, 2), BasisSpec::tps_polynomial(d), pts, 100, 7 + inst));
            CHECK(cpd_check(KernelSpec::diagonal_gaussian({0.1, 0.3}), BasisSpec::tps_polynomial(d), pts, 100));
            CHECK(cpd_check(KernelSpec::diagonal_gaussian({0.1, 0.3}), BasisSpec::none(), pts, 100));
        }
    }

    // Without the polynomial basis the TPS Gram matrix is indefinite.
    const auto pts = testutil::random_locations(rng, 10, 2);
    const auto tps = KernelSpec::tps(2, 2, 1);
    const Matrix k = assemble_kernel_dense(tps, pts);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
    const Vector c = eig.eigenvectors().col(0);
    CHECK(c.dot(k * c) < -1e-6);
    CHECK_FALSE(cpd_check(tps, BasisSpec::none(), pts, 100));
}

TEST_CASE("squared-distance TPS is not conditionally positive definite") {
    // Documents why the distance convention is the default.
    CounterRng rng(26, Stream::Generic);
    bool any_negative = false;
    for (int inst = 0; inst < 5 && !any_negative; ++inst) {
        const auto pts = testutil::random_locations(rng, 12, 2);
        const auto spec = KernelSpec::tps(2, 2, 1, TpsArgument::SquaredDistance);
        const Matrix p = projector(assemble_basis_matrix(BasisSpec::tps_polynomial(2), pts, 1));
        const Matrix k = p * assemble_kernel_dense(spec, pts) * p;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
        any_negative = eig.eigenvalues().minCoeff() < -1e-6 * eig.eigenvalues().cwiseAbs().maxCoeff();
    }
    CHECK(any_negative);
}

TEST_CASE("channel helpers") {
    const std::vector<Location> pts{Location{0.1}, Location{0.6}, Location{0.9}};
    const auto ks = channel_kernels(KernelSpec::diagonal_gaussian({0.1, 0.2}), pts);
    REQUIRE(ks.size() == 2);
    CHECK(ks[1](0, 1) == doctest::Approx(std::exp(-0.25 / 0.2)));
    CHECK(channel_kernels(KernelSpec::gaussian(0.1, 3), pts).size() == 1);

    const auto cb = channel_basis(BasisSpec::tps_polynomial(1), pts, 2);
    CHECK(cb.values[1].cols() == 2);
    CHECK(cb.theta_index[1] == std::vector<Eigen::Index>{1, 3});

    const auto pl = channel_basis(BasisSpec::pathloss({Location{0.0}}), pts, 2);
    CHECK(pl.values[0].cols() == 1);
    CHECK(pl.values[1].cols() == 0);
}
