#include "doctest.h"
#include "test_helpers.hpp"

#include "psdmap/simulate.hpp"

#include <cmath>

using namespace psdmap;

namespace {

ScenarioConfig small_line(int sensors = 10, int per_sensor = 3) {
    auto cfg = ScenarioConfig::line();
    cfg.sensors = sensors;
    cfg.per_sensor = per_sensor;
    cfg.quantizer.calibration_draws = 2000;
    return cfg;
}

}  // namespace

TEST_CASE("zero shadowing variance draws zeros") {
    const std::vector<Location> pts{{0.1}, {0.4}, {0.9}};
    const auto s = sample_shadowing(pts, 0.0, 0.8, 3, 2);
    REQUIRE(s.size() == 2);
    CHECK(s[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(s[1].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single point shadowing has variance sigma_s^2") {
    const std::vector<Location> pts{{0.3, 0.3}};
    double sum = 0.0, sq = 0.0;
    const int runs = 10000;
    for (int seed = 0; seed < runs; ++seed) {
        const double v = sample_shadowing(pts, 2.0, 0.8, static_cast<std::uint64_t>(seed))[0](0);
        sum += v;
        sq += v * v;
    }
    const double mean = sum / runs;
    const double var = sq / runs - mean * mean;
    CHECK(std::abs(var - 2.0) <= 0.05 * 2.0);
}

TEST_CASE("two points at distance one have covariance sigma_s^2 rho") {
    const std::vector<Location> pts{{0.0, 0.0}, {0.6, 0.8}};
    double c = 0.0;
    const int runs = 10000;
    for (int seed = 0; seed < runs; ++seed) {
        const auto s = sample_shadowing(pts, 2.0, 0.8, static_cast<std::uint64_t>(seed))[0];
        c += s(0) * s(1);
    }
    CHECK(std::abs(c / runs - 1.6) <= 0.05 * 1.6);
}

TEST_CASE("empirical shadowing covariance converges to the model") {
    CounterRng rng(201, Stream::Generic);
    const auto pts = testutil::random_locations(rng, 5, 2);
    const int draws = 10000;
    const auto s = sample_shadowing(pts, 2.0, 0.8, 77, draws);
    Matrix emp = Matrix::Zero(5, 5);
    for (const auto& v : s) emp += v * v.transpose();
    emp /= draws;
    Matrix model(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) model(i, j) = 2.0 * std::pow(0.8, distance(pts[i], pts[j]));
    CHECK((emp - model).norm() / model.norm() < 0.10);
}

TEST_CASE("invalid shadowing parameters are rejected") {
    const std::vector<Location> pts{{0.1}};
    CHECK_THROWS_AS(sample_shadowing(pts, 1.0, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(sample_shadowing(pts, -1.0, 0.5, 1), ConfigError);
}

TEST_CASE("pathloss arithmetic of the gain field") {
    ScenarioConfig cfg;
    cfg.dim = 2;
    cfg.transmitters = {{0.9, Location{0.2, 0.8}}};
    cfg.delta = 1.0;
    cfg.gamma = 3.0;
    const std::vector<Location> support{{0.2, 0.8}, {0.5, 0.5}};
    const auto field = gain_field(cfg, support, {Vector::Zero(2)});
    CHECK(field(Location{0.2, 0.8})(0) == doctest::Approx(0.9).epsilon(1e-14));
    CHECK(field(Location{0.2, 0.8})(1) == 0.75);
    // delta + r = 1 at chi, 2 at distance 1.
    CHECK(field(Location{1.2, 0.8})(0) == doctest::Approx(0.9 / 8.0).epsilon(1e-14));

    Vector s(2);
    s << 10.0, 0.0;
    const auto shadowed = gain_field(cfg, support, {s});
    CHECK(shadowed(Location{0.2, 0.8})(0) == doctest::Approx(9.0).epsilon(1e-14));
}

TEST_CASE("field reproduces the draw on the support and interpolates smoothly off it") {
    auto cfg = small_line();
    CounterRng rng(202, Stream::Generic);
    const auto support = testutil::random_locations(rng, 30, 1);
    const auto field = gain_field(cfg, support);
    for (std::size_t i = 0; i < support.size(); ++i) {
        CHECK(field.shadow_db(0, support[i]) == field.shadow()[0](static_cast<Eigen::Index>(i)));
        Location near = support[i];
        near.coords(0) += 1e-9;
        CHECK(std::abs(field.shadow_db(0, near) - field.shadow()[0](static_cast<Eigen::Index>(i))) < 1e-4);
    }
    const auto grid = testutil::random_locations(rng, 200, 1);
    const Matrix l = field.evaluate(grid);
    CHECK(l.minCoeff() > 0.0);
    CHECK(l.col(l.cols() - 1).isConstant(0.75));
}

TEST_CASE("noiseless synthesis with a fine quantizer round-trips") {
    auto cfg = small_line(12, 4);
    cfg.noise_variance = 0.0;
    const auto sensors = draw_uniform_points(cfg, cfg.sensors, cfg.seeds.sensors, Stream::Sensors);
    const auto field = gain_field(cfg, sensors);
    double top = 0.0;
    for (const auto& x : sensors) top = std::max(top, field(x).sum());
    const auto q = QuantizerSpec::uniform(0.0, 1.01 * top / 65536.0, 65536);
    const auto data = synthesize_measurements(cfg, field, sensors, q);
    REQUIRE(data.records.size() == 48);
    for (const auto& r : data.records) {
        CHECK(std::abs(r.y - *r.raw) <= r.eps);
        CHECK(!r.clipped);
        CHECK(*r.raw >= 0.0);
    }
    CHECK(data.error_rate == 0.0);
    CHECK(data.clip_rate == 0.0);
}

TEST_CASE("noise calibration reaches a 15 percent error rate") {
    auto cfg = ScenarioConfig::plane();
    cfg.quantizer.bits = 5;
    const auto sensors = draw_uniform_points(cfg, 40, cfg.seeds.sensors, Stream::Sensors);
    const auto field = gain_field(cfg, sensors);
    const auto q = calibrate_quantizer(cfg, field);
    const double sd = calibrate_noise_std(cfg, field, q, 0.15, 10000);
    CHECK(sd > 0.0);
    // Fresh draws, independent of the ones used by the bisection.
    const double rate = measurement_error_rate(cfg, field, q, sd, 10000, 9999);
    CHECK(std::abs(rate - 0.15) <= 0.02);
    CHECK(measurement_error_rate(cfg, field, q, 0.0, 1000, 5) == 0.0);
}

TEST_CASE("scenario generation is deterministic") {
    const auto cfg = small_line();
    const auto a = build_scenario(cfg, 50);
    const auto b = build_scenario(cfg, 50);
    REQUIRE(a.data.records.size() == b.data.records.size());
    for (std::size_t i = 0; i < a.data.records.size(); ++i) {
        CHECK(a.data.records[i].location == b.data.records[i].location);
        CHECK(a.data.records[i].phi == b.data.records[i].phi);
        CHECK(*a.data.records[i].raw == *b.data.records[i].raw);
        CHECK(a.data.records[i].y == b.data.records[i].y);
    }
    CHECK(a.data.quantizer.boundaries == b.data.quantizer.boundaries);
}

TEST_CASE("growing the sensor count keeps the earlier sensors and their records") {
    auto cfg = small_line(8, 3);
    auto big = small_line(16, 5);
    const auto s8 = draw_uniform_points(cfg, 8, cfg.seeds.sensors, Stream::Sensors);
    const auto s16 = draw_uniform_points(big, 16, big.seeds.sensors, Stream::Sensors);
    for (int i = 0; i < 8; ++i) CHECK(s8[static_cast<std::size_t>(i)] == s16[static_cast<std::size_t>(i)]);
    const auto field = gain_field(big, s16);
    const auto q = QuantizerSpec::uniform(0.0, 0.1, 64);
    const auto a = synthesize_measurements(cfg, field, s8, q);
    const auto b = synthesize_measurements(big, field, s16, q);
    for (int n = 0; n < 8; ++n)
        for (int p = 0; p < 3; ++p) {
            const auto& ra = a.records[static_cast<std::size_t>(n * 3 + p)];
            const auto& rb = b.records[static_cast<std::size_t>(n * 5 + p)];
            CHECK(ra.phi == rb.phi);
            CHECK(*ra.raw == *rb.raw);
        }
}

TEST_CASE("synthesized powers are nonnegative under noise") {
    auto cfg = small_line(20, 5);
    cfg.noise_variance = 1e8;
    const auto sc = build_scenario(cfg, 20);
    for (const auto& r : sc.data.records) CHECK(*r.raw >= 0.0);
    CHECK(sc.data.error_rate > 0.0);
}

TEST_CASE("configuration errors name the key") {
    auto cfg = small_line();
    cfg.shadow_rho = 1.5;
    try {
        cfg.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "scenario.shadowing.rho");
    }
    cfg = small_line();
    cfg.transmitters[1].power = -1.0;
    try {
        cfg.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "scenario.transmitters[1].power");
    }
}
