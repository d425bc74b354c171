#include "doctest.h"
#include "test_helpers.hpp"

#include "psdmap/online.hpp"

#include <cmath>

using namespace psdmap;

namespace {

MeasurementRecord record(Location x, Vector phi, double y, double eps, int sensor = 0) {
    MeasurementRecord r;
    r.sensor_index = sensor;
    r.location = std::move(x);
    r.phi = std::move(phi);
    r.y = y;
    r.eps = eps;
    return r;
}

OnlineOptions options(const KernelSpec& k, double lambda, double mu) {
    OnlineOptions o;
    o.kernel = k;
    o.lambda = lambda;
    o.mu = mu;
    return o;
}

std::vector<Location> distinct_anchors(const std::vector<MeasurementRecord>& recs) {
    std::vector<Location> out;
    for (const auto& r : recs)
        if (std::find(out.begin(), out.end(), r.location) == out.end()) out.push_back(r.location);
    return out;
}

}  // namespace

TEST_CASE("L1eps subgradient examples") {
    CHECK(loss_subgradient(OnlineLoss::L1eps, 1.0, 0.5) == 1.0);
    CHECK(loss_subgradient(OnlineLoss::L1eps, 0.0, 0.5) == 0.0);
    CHECK(loss_subgradient(OnlineLoss::L1eps, 0.5, 0.5) == 0.5);
    CHECK(loss_subgradient(OnlineLoss::L1eps, -0.5, 0.5) == -0.5);
    CHECK(loss_subgradient(OnlineLoss::L1eps, -2.0, 0.5) == -1.0);
    CHECK_THROWS_AS(loss_subgradient(OnlineLoss::L1eps, 0.0, -1.0), DimensionError);
}

TEST_CASE("L2eps subgradient is 2e outside the tube") {
    CHECK(loss_subgradient(OnlineLoss::L2eps, 1.0, 0.5) == 2.0);
    CHECK(loss_subgradient(OnlineLoss::L2eps, 0.5, 0.5) == 0.0);
    CHECK(loss_subgradient(OnlineLoss::L2eps, -2.0, 0.5) == -4.0);
    CHECK(loss_value(OnlineLoss::L2eps, 2.0, 0.5) == 3.5);
}

TEST_CASE("subgradient is a supporting slope of the loss") {
    CounterRng rng(91, Stream::Generic);
    for (int i = 0; i < 500; ++i) {
        const double e = rng.uniform(-3, 3), e2 = rng.uniform(-3, 3), eps = rng.uniform(0, 1);
        const double g = loss_subgradient(OnlineLoss::L1eps, e, eps);
        CHECK(loss_value(OnlineLoss::L1eps, e2, eps) >= loss_value(OnlineLoss::L1eps, e, eps) + g * (e2 - e) - 1e-12);
    }
}

TEST_CASE("first step arithmetic") {
    auto s = OnlineState::distinct(options(KernelSpec::gaussian(0.1, 1), 0.1, 1.0));
    const auto rep = s.step(record({0.3}, Vector::Ones(1), 2.0, 0.0));
    CHECK(rep.t == 1);
    CHECK(rep.rate == 1.0);
    CHECK(rep.residual == 2.0);
    CHECK(rep.subgradient == 1.0);
    REQUIRE(s.coefficients().size() == 1);
    CHECK(s.coefficients()[0](0) == doctest::Approx(1.0));
    CHECK(s.t() == 2);
}

TEST_CASE("a record inside the tube leaves w at zero") {
    auto s = OnlineState::distinct(options(KernelSpec::gaussian(0.1, 2), 0.1, 1.0));
    Vector phi(2);
    phi << 0.4, 0.9;
    s.step(record({0.3}, phi, 0.2, 0.25));
    CHECK(s.coefficients().empty());
    CHECK(s.norm_sq() == 0.0);

    auto sh = OnlineState::shared(options(KernelSpec::gaussian(0.1, 2), 0.1, 1.0), {Location{0.3}});
    sh.step(record({0.3}, phi, -0.2, 0.25));
    CHECK(sh.coefficients()[0].norm() == 0.0);
}

TEST_CASE("cost at w = 0 is the loss of y") {
    auto s = OnlineState::distinct(options(KernelSpec::gaussian(0.1, 1), 0.1, 1.0));
    CHECK(s.instantaneous_cost(record({0.5}, Vector::Ones(1), 2.0, 0.5)) == 1.5);
    CHECK(instantaneous_cost(s, record({0.5}, Vector::Ones(1), 0.1, 0.5)) == 0.0);
}

TEST_CASE("single Gaussian coefficient has norm |c|^2") {
    auto s = OnlineState::distinct(options(KernelSpec::diagonal_gaussian({0.1, 0.4, 0.2}), 0.01, 0.5));
    Vector phi(3);
    phi << 0.2, 0.7, 0.5;
    s.step(record({0.1, 0.6}, phi, 3.0, 0.1));
    REQUIRE(s.coefficients().size() == 1);
    CHECK(s.norm_sq() == doctest::Approx(s.coefficients()[0].squaredNorm()).epsilon(1e-14));
    CHECK(s.norm_sq_exact() == doctest::Approx(s.coefficients()[0].squaredNorm()).epsilon(1e-14));
}

TEST_CASE("invalid configurations are rejected") {
    CHECK_THROWS_AS(OnlineState::distinct(options(KernelSpec::gaussian(0.1, 1), 0.5, 2.0)), ConfigError);
    CHECK_THROWS_AS(OnlineState::distinct(options(KernelSpec::gaussian(0.1, 1), 0.0, 2.0)), ConfigError);
    CHECK_THROWS_AS(OnlineState::distinct(options(KernelSpec::tps(2, 1, 1), 0.1, 1.0)), ConfigError);
    auto s = OnlineState::shared(options(KernelSpec::gaussian(0.1, 1), 0.1, 1.0), {Location{0.1}});
    CHECK_THROWS_AS(s.step(record({0.2}, Vector::Ones(1), 1.0, 0.0)), Error);
    CHECK_THROWS_AS(s.step(record({0.1}, Vector::Ones(2), 1.0, 0.0)), DimensionError);
}

TEST_CASE("tracked norm equals the quadratic form on the assembled Gram matrix") {
    CounterRng rng(92, Stream::Generic);
    for (int inst = 0; inst < 5; ++inst) {
        const int m = 1 + inst % 3;
        const auto recs = testutil::random_records(rng, 6, 3, m, 2, 4);
        auto s = OnlineState::distinct(options(KernelSpec::gaussian(0.2, m), 0.05, 2.0));
        for (int t = 0; t < 60; ++t) {
            s.step(recs[rng.below(recs.size())]);
            const auto est = s.snapshot();
            const Matrix k = assemble_kernel_dense(est.kernel, est.anchors);
            const double direct = est.c.dot(k * est.c);
            CHECK(s.norm_sq() == doctest::Approx(direct).epsilon(1e-9));
            CHECK(direct >= -1e-12);
            CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(k).eigenvalues().minCoeff() >= -1e-10);
        }
    }
}

TEST_CASE("predictions agree with the kernel expansion evaluated as a batch estimate") {
    CounterRng rng(93, Stream::Generic);
    const auto recs = testutil::random_records(rng, 5, 4, 3, 1, 4);
    auto s = OnlineState::shared(options(KernelSpec::diagonal_gaussian({0.1, 0.2, 0.3}), 0.01, 1.0),
                                 distinct_anchors(recs));
    for (int t = 0; t < 40; ++t) s.step(recs[rng.below(recs.size())]);
    const auto est = s.snapshot();
    const auto grid = testutil::random_locations(rng, 30, 1);
    const Matrix batch = evaluate_map(est, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const PowerVector direct = s.predict(grid[i]);
        CHECK(testutil::max_abs(direct.transpose() - batch.row(static_cast<Eigen::Index>(i))) <= 1e-12);
    }
}

TEST_CASE("untouched coefficients shrink") {
    CounterRng rng(94, Stream::Generic);
    const auto recs = testutil::random_records(rng, 6, 2, 2, 1, 4);
    auto s = OnlineState::shared(options(KernelSpec::gaussian(0.1, 2), 0.2, 2.0), distinct_anchors(recs));
    for (int t = 0; t < 80; ++t) {
        const auto& r = recs[rng.below(recs.size())];
        const auto before = s.coefficients();
        s.step(r);
        for (std::size_t n = 0; n < before.size(); ++n) {
            if (s.locations()[n] == r.location) continue;
            CHECK(s.coefficients()[n].norm() <= before[n].norm());
        }
    }
}

TEST_CASE("iterates stay inside the norm bound") {
    CounterRng rng(95, Stream::Generic);
    for (double lambda : {0.5, 0.05, 1e-3, 1e-6}) {
        const auto recs = testutil::random_records(rng, 8, 3, 3, 2, 4);
        const double mu = std::min(0.5 / lambda, 5.0);
        auto s = OnlineState::shared(options(KernelSpec::gaussian(0.1, 3), lambda, mu), distinct_anchors(recs));
        RegretLedger ledger(lambda, mu);
        for (int t = 0; t < 200; ++t) {
            const auto& r = recs[rng.below(recs.size())];
            ledger.observe(s.options().kernel, r);
            s.step(r);
            CHECK(std::sqrt(s.norm_sq()) <= ledger.norm_bound() * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("the norm bound can fail once mu lambda exceeds one half") {
    // One sensor, phi = 1, y far above w: every step has L' = 1, so |w_{t+1}| = |1 - 2 mu_t lambda| |w_t| + mu_t.
    const double lambda = 0.5, mu = 1.8;
    auto s = OnlineState::shared(options(KernelSpec::gaussian(0.1, 1), lambda, mu), {Location{0.5}});
    RegretLedger ledger(lambda, mu);
    const auto r = record({0.5}, Vector::Ones(1), 100.0, 0.0);
    ledger.observe(s.options().kernel, r);
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
        s.step(r);
        worst = std::max(worst, std::sqrt(s.norm_sq()));
    }
    CHECK(worst > ledger.norm_bound());
}

TEST_CASE("distinct and shared bookkeeping agree when each sensor is visited once") {
    CounterRng rng(96, Stream::Generic);
    const auto recs = testutil::random_records(rng, 12, 1, 3, 2, 5);
    const auto k = KernelSpec::diagonal_gaussian({0.05, 0.1, 0.2});
    auto a = OnlineState::distinct(options(k, 0.01, 3.0));
    auto b = OnlineState::shared(options(k, 0.01, 3.0), distinct_anchors(recs));
    REQUIRE(a.truncation() >= recs.size());
    for (const auto& r : recs) {
        const auto ra = a.step(r);
        const auto rb = b.step(r);
        CHECK(ra.residual == rb.residual);
        CHECK(ra.cost == rb.cost);
    }
    const auto grid = testutil::random_locations(rng, 20, 2);
    for (const auto& x : grid) CHECK(testutil::max_abs(a.predict(x) - b.predict(x)) <= 1e-14);
}

TEST_CASE("truncation keeps at most min(t - 1, I) coefficients") {
    CounterRng rng(97, Stream::Generic);
    const auto recs = testutil::random_records(rng, 10, 3, 2, 1, 4);
    auto o = options(KernelSpec::gaussian(0.1, 2), 0.05, 1.0);
    o.truncation = 7;
    auto s = OnlineState::distinct(o);
    for (int t = 1; t <= 50; ++t) {
        s.step(recs[rng.below(recs.size())]);
        CHECK(s.coefficients().size() <= static_cast<std::size_t>(std::min(t, 7)));
        CHECK(s.coefficients().size() <= static_cast<std::size_t>(s.t() - 1));
        CHECK(s.norm_sq() == doctest::Approx(s.norm_sq_exact()).epsilon(1e-9));
    }
}

TEST_CASE("default truncation leaves a tail of at most 1e-6") {
    for (double ml : {0.001, 0.01, 0.1, 0.3}) {
        const std::size_t i = default_truncation(1.0, ml);
        const double r = 1.0 - 2.0 * ml;
        CHECK(std::pow(r, static_cast<double>(i)) <= 1e-6);
        CHECK(std::pow(r, static_cast<double>(i - 1)) > 1e-6);
    }
    CHECK(default_truncation(1.0, 0.5) == 1);
}

TEST_CASE("regret envelope arithmetic") {
    RegretLedger ledger(0.5, 1.0, 1.0, 1.0);
    CHECK(ledger.a2() == doctest::Approx(0.5));
    CHECK(ledger.a1() == doctest::Approx(6.0));
    CHECK(regret_envelope(ledger, 4) == doctest::Approx(3.125));
    for (int t = 1; t < 100; ++t) CHECK(regret_envelope(ledger, t + 1) < regret_envelope(ledger, t));
    CHECK_THROWS_AS(regret_envelope(ledger, 0), DimensionError);
}

TEST_CASE("Gaussian kernels give a unit diagonal bound") {
    CHECK(kernel_diagonal_bound(KernelSpec::diagonal_gaussian({0.1, 0.5}), Location{0.3, 0.2}) == 1.0);
    CHECK(kernel_diagonal_bound(KernelSpec::gaussian(0.1, 4), Location{0.7}) == 1.0);
}

TEST_CASE("batch comparator matches its own averaged cost") {
    CounterRng rng(98, Stream::Generic);
    const auto recs = testutil::random_records(rng, 5, 3, 2, 1, 4);
    const auto k = KernelSpec::gaussian(0.1, 2);
    const double lambda = 0.02;
    const auto fit = fit_svm_nonparametric(recs, k, lambda);
    double avg = 0.0;
    for (const auto& r : recs)
        avg += loss_value(OnlineLoss::L1eps, r.y - r.phi.dot(fit.estimate(r.location)), r.eps);
    avg = avg / static_cast<double>(recs.size()) + lambda * rkhs_norm_sq(fit.estimate);
    const auto cmp = batch_comparator(recs, k, lambda);
    CHECK(cmp.upper == doctest::Approx(avg).epsilon(1e-9));
    CHECK(cmp.lower <= cmp.upper + 1e-9);
    CHECK(cmp.upper - cmp.lower <= 1e-6 * (1.0 + cmp.upper));
}

TEST_CASE("averaged online cost stays within the envelope of the batch optimum") {
    CounterRng rng(99, Stream::Generic);
    for (int run = 0; run < 3; ++run) {
        const auto recs = testutil::random_records(rng, 6, 4, 2, 1, 4);
        const auto k = KernelSpec::gaussian(0.1, 2);
        const double lambda = 0.05, mu = 2.0;
        auto s = OnlineState::shared(options(k, lambda, mu), distinct_anchors(recs));
        RegretLedger ledger(lambda, mu);
        std::vector<MeasurementRecord> seen;
        for (int t = 1; t <= 200; ++t) {
            const auto& r = recs[rng.below(recs.size())];
            seen.push_back(r);
            ledger.observe(k, r);
            ledger.record(s.step(r).cost);
            if (t % 20 == 0 || t <= 5) {
                const auto cmp = batch_comparator(seen, k, lambda);
                CHECK(ledger.online_cost_sum / t <= cmp.lower + regret_envelope(ledger, t));
            }
        }
    }
}
