#include "psdmap/simulate.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <string>

namespace psdmap {

Vector ScenarioConfig::lower() const { return region_lower.size() ? region_lower : Vector::Zero(dim); }

Vector ScenarioConfig::upper() const { return region_upper.size() ? region_upper : Vector::Ones(dim); }

void ScenarioConfig::validate() const {
    if (dim < 1 || dim > 3) throw ConfigError("scenario.dim", "must be 1, 2 or 3");
    const Vector lo = lower(), hi = upper();
    if (lo.size() != dim) throw ConfigError("scenario.region_lower", "needs " + std::to_string(dim) + " entries");
    if (hi.size() != dim) throw ConfigError("scenario.region_upper", "needs " + std::to_string(dim) + " entries");
    if (!(hi.array() > lo.array()).all()) throw ConfigError("scenario.region_upper", "must exceed region_lower");
    if (transmitters.empty()) throw ConfigError("scenario.transmitters", "at least one transmitter is required");
    for (std::size_t i = 0; i < transmitters.size(); ++i) {
        const auto key = "scenario.transmitters[" + std::to_string(i) + "]";
        if (!(transmitters[i].power > 0.0)) throw ConfigError(key + ".power", "must be positive");
        if (transmitters[i].position.dim() != dim)
            throw ConfigError(key + ".position", "needs " + std::to_string(dim) + " coordinates");
    }
    if (!(noise_power > 0.0)) throw ConfigError("scenario.noise_power", "must be positive");
    if (!(gamma > 0.0)) throw ConfigError("scenario.gamma", "must be positive");
    if (!(delta > 0.0)) throw ConfigError("scenario.delta", "must be positive");
    if (!(shadow_variance >= 0.0)) throw ConfigError("scenario.shadowing.variance", "must be nonnegative");
    if (!(shadow_rho > 0.0 && shadow_rho < 1.0)) throw ConfigError("scenario.shadowing.rho", "must lie in (0, 1)");
    if (sensors < 1) throw ConfigError("scenario.sensors", "must be at least 1");
    if (per_sensor < 1) throw ConfigError("scenario.per_sensor", "must be at least 1");
    if (!(noise_variance >= 0.0)) throw ConfigError("scenario.noise_variance", "must be nonnegative");
    if (quantizer.bits < 1 || quantizer.bits > 24) throw ConfigError("scenario.quantizer.bits", "must lie in [1, 24]");
    if (!(quantizer.clip_prob > 0.0 && quantizer.clip_prob < 1.0))
        throw ConfigError("scenario.quantizer.clip_prob", "must lie in (0, 1)");
    if (quantizer.calibration_draws < 100)
        throw ConfigError("scenario.quantizer.calibration_draws", "must be at least 100");
}

ScenarioConfig ScenarioConfig::line() {
    ScenarioConfig c;
    c.dim = 1;
    c.transmitters = {{0.8, Location{0.1}}, {0.9, Location{0.2}}, {0.8, Location{0.4}}, {0.7, Location{0.8}}};
    return c;
}

ScenarioConfig ScenarioConfig::plane() {
    ScenarioConfig c;
    c.dim = 2;
    c.transmitters = {{0.9, Location{0.2, 0.8}}, {0.8, Location{0.4, 0.5}}, {0.7, Location{0.8, 0.9}}};
    c.sensors = 50;
    c.per_sensor = 8;
    c.quantizer.kind = QuantizerKind::Cpq;
    return c;
}

std::vector<Location> draw_uniform_points(const ScenarioConfig& cfg, int count, std::uint64_t seed, Stream stream) {
    const Vector lo = cfg.lower(), hi = cfg.upper();
    CounterRng rng(seed, stream);
    std::vector<Location> out;
    out.reserve(static_cast<std::size_t>(std::max(0, count)));
    for (int i = 0; i < count; ++i) {
        Vector x(cfg.dim);
        for (int k = 0; k < cfg.dim; ++k) x(k) = rng.uniform(lo(k), hi(k));
        out.emplace_back(std::move(x));
    }
    return out;
}

namespace {

Matrix shadow_covariance(const std::vector<Location>& points, double sigma_s2, double rho) {
    const auto n = static_cast<Eigen::Index>(points.size());
    Matrix c(n, n);
    const double log_rho = std::log(rho);
    for (Eigen::Index i = 0; i < n; ++i) {
        c(i, i) = sigma_s2;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = sigma_s2 * std::exp(log_rho * distance(points[static_cast<std::size_t>(i)],
                                                                    points[static_cast<std::size_t>(j)]));
            c(i, j) = v;
            c(j, i) = v;
        }
    }
    return c;
}

/// Cholesky of C + jitter I, escalating the jitter until the factorization succeeds.
Eigen::LLT<Matrix> factor_covariance(const Matrix& c, double scale) {
    double jitter = 0.0;
    const auto n = c.rows();
    for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::LLT<Matrix> llt(c + jitter * Matrix::Identity(n, n));
        if (llt.info() == Eigen::Success) return llt;
        jitter = jitter == 0.0 ? 1e-12 * scale : jitter * 10.0;
    }
    throw SolverError("shadowing covariance factorization failed after maximum jitter");
}

}  // namespace

std::vector<Vector> sample_shadowing(const std::vector<Location>& points, double sigma_s2, double rho,
                                     std::uint64_t seed, int transmitters) {
    if (!(sigma_s2 >= 0.0)) throw ConfigError("scenario.shadowing.variance", "must be nonnegative");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("scenario.shadowing.rho", "must lie in (0, 1)");
    const auto n = static_cast<Eigen::Index>(points.size());
    std::vector<Vector> out(static_cast<std::size_t>(transmitters), Vector::Zero(n));
    if (sigma_s2 == 0.0 || n == 0) return out;
    const auto llt = factor_covariance(shadow_covariance(points, sigma_s2, rho), sigma_s2);
    const Matrix l = llt.matrixL();
    for (int m = 0; m < transmitters; ++m) {
        CounterRng rng(seed, Stream::Field, static_cast<std::uint64_t>(m));
        Vector z(n);
        for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
        out[static_cast<std::size_t>(m)] = l.triangularView<Eigen::Lower>() * z;
    }
    return out;
}

GroundTruthField::GroundTruthField(const ScenarioConfig& cfg, std::vector<Location> support,
                                   std::vector<Vector> shadow_db)
    : tx_(cfg.transmitters),
      noise_power_(cfg.noise_power),
      gamma_(cfg.gamma),
      delta_(cfg.delta),
      sigma_s2_(cfg.shadow_variance),
      rho_(cfg.shadow_rho),
      support_(std::move(support)),
      shadow_(std::move(shadow_db)) {
    if (shadow_.size() != tx_.size()) throw DimensionError("one shadowing vector per transmitter is required");
    for (const auto& s : shadow_)
        if (s.size() != static_cast<Eigen::Index>(support_.size()))
            throw DimensionError("shadowing vector length must match the support set");
    for (std::size_t i = 0; i < support_.size(); ++i) {
        const auto& c = support_[i].coords;
        index_.emplace(std::vector<double>(c.data(), c.data() + c.size()), i);
    }
    weights_.assign(tx_.size(), Vector());
    const bool any = std::any_of(shadow_.begin(), shadow_.end(), [](const Vector& s) { return s.size() && s.cwiseAbs().maxCoeff() > 0.0; });
    if (sigma_s2_ > 0.0 && any) {
        const auto llt = factor_covariance(shadow_covariance(support_, sigma_s2_, rho_), sigma_s2_);
        for (std::size_t m = 0; m < tx_.size(); ++m) weights_[m] = llt.solve(shadow_[m]);
    }
}

double GroundTruthField::shadow_db(int m, const Location& x) const {
    const auto& s = shadow_.at(static_cast<std::size_t>(m));
    const auto it = index_.find(std::vector<double>(x.coords.data(), x.coords.data() + x.coords.size()));
    if (it != index_.end()) return s(static_cast<Eigen::Index>(it->second));
    const auto& w = weights_[static_cast<std::size_t>(m)];
    if (w.size() == 0) return 0.0;
    const double log_rho = std::log(rho_);
    double v = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i)
        v += sigma_s2_ * std::exp(log_rho * distance(x, support_[i])) * w(static_cast<Eigen::Index>(i));
    return v;
}

PowerVector GroundTruthField::operator()(const Location& x) const {
    PowerVector l(channels());
    for (std::size_t m = 0; m < tx_.size(); ++m) {
        const double r = distance(x, tx_[m].position);
        const double s = shadow_db(static_cast<int>(m), x);
        l(static_cast<Eigen::Index>(m)) = tx_[m].power * std::pow(delta_ + r, -gamma_) * std::pow(10.0, s / 10.0);
    }
    l(channels() - 1) = noise_power_;
    return l;
}

Matrix GroundTruthField::evaluate(const std::vector<Location>& points) const {
    Matrix out(static_cast<Eigen::Index>(points.size()), channels());
    for (std::size_t i = 0; i < points.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = (*this)(points[i]).transpose();
    return out;
}

GroundTruthField gain_field(const ScenarioConfig& cfg, const std::vector<Location>& support) {
    cfg.validate();
    auto shadow = sample_shadowing(support, cfg.shadow_variance, cfg.shadow_rho, cfg.seeds.field,
                                   static_cast<int>(cfg.transmitters.size()));
    return GroundTruthField(cfg, support, std::move(shadow));
}

GroundTruthField gain_field(const ScenarioConfig& cfg, const std::vector<Location>& support,
                            std::vector<Vector> shadow_db) {
    cfg.validate();
    return GroundTruthField(cfg, support, std::move(shadow_db));
}

namespace {

struct PowerDraw {
    double clean = 0.0;  // phi^T l(x)
    double z = 0.0;      // standard normal for the noise
};

std::vector<PowerDraw> draw_powers(const ScenarioConfig& cfg, const GroundTruthField& field, int draws,
                                   std::uint64_t seed, std::uint64_t substream) {
    const Vector lo = cfg.lower(), hi = cfg.upper();
    CounterRng rng(seed, Stream::Calibration, substream);
    std::vector<PowerDraw> out(static_cast<std::size_t>(draws));
    Vector x(cfg.dim);
    FilterWeight phi(cfg.channels());
    for (auto& d : out) {
        for (int k = 0; k < cfg.dim; ++k) x(k) = rng.uniform(lo(k), hi(k));
        for (int m = 0; m < cfg.channels(); ++m) phi(m) = rng.uniform();
        d.clean = phi.dot(field(Location(x)));
        d.z = rng.normal();
    }
    return out;
}

}  // namespace

std::vector<double> power_samples(const ScenarioConfig& cfg, const GroundTruthField& field, int draws,
                                  double noise_std) {
    const auto d = draw_powers(cfg, field, draws, cfg.seeds.calibration, 0);
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = std::abs(d[i].clean + noise_std * d[i].z);
    return out;
}

QuantizerSpec calibrate_quantizer(const ScenarioConfig& cfg, const GroundTruthField& field) {
    cfg.validate();
    const auto s = power_samples(cfg, field, cfg.quantizer.calibration_draws, std::sqrt(cfg.noise_variance));
    if (cfg.quantizer.kind == QuantizerKind::Cpq) return calibrate_cpq(s, cfg.quantizer.bits);
    return calibrate_uniform(s, cfg.quantizer.bits, cfg.quantizer.clip_prob);
}

namespace {

double error_rate_on(const std::vector<PowerDraw>& d, const QuantizerSpec& q, double noise_std) {
    std::size_t wrong = 0;
    for (const auto& p : d) {
        if (quantize(q, std::abs(p.clean + noise_std * p.z)).index != quantize(q, p.clean).index) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(d.size());
}

}  // namespace

double measurement_error_rate(const ScenarioConfig& cfg, const GroundTruthField& field, const QuantizerSpec& q,
                              double noise_std, int draws, std::uint64_t seed) {
    if (draws < 1) throw DimensionError("measurement_error_rate: draws must be positive");
    return error_rate_on(draw_powers(cfg, field, draws, seed, 1), q, noise_std);
}

double calibrate_noise_std(const ScenarioConfig& cfg, const GroundTruthField& field, const QuantizerSpec& q,
                           double target, int draws) {
    if (!(target > 0.0 && target < 1.0)) throw ConfigError("target_error_rate", "must lie in (0, 1)");
    const auto d = draw_powers(cfg, field, draws, cfg.seeds.calibration, 1);
    double lo = 0.0, hi = q.upper() - q.lower();
    int grow = 0;
    while (error_rate_on(d, q, hi) < target) {
        hi *= 2.0;
        if (++grow > 60) throw SolverError("noise calibration: target error rate is unreachable");
    }
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (error_rate_on(d, q, mid) < target) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

SyntheticData synthesize_measurements(const ScenarioConfig& cfg, const GroundTruthField& field,
                                      const std::vector<Location>& sensors, const QuantizerSpec& quantizer) {
    cfg.validate();
    quantizer.validate();
    SyntheticData out;
    out.sensors = sensors;
    out.quantizer = quantizer;
    const double noise_std = std::sqrt(cfg.noise_variance);
    const int m = cfg.channels();
    std::size_t clipped = 0, wrong = 0;
    out.records.reserve(sensors.size() * static_cast<std::size_t>(cfg.per_sensor));
    for (std::size_t n = 0; n < sensors.size(); ++n) {
        CounterRng phi_rng(cfg.seeds.phi, Stream::Phi, n);
        CounterRng noise_rng(cfg.seeds.noise, Stream::Noise, n);
        const PowerVector l = field(sensors[n]);
        for (int p = 0; p < cfg.per_sensor; ++p) {
            MeasurementRecord r;
            r.sensor_index = static_cast<int>(n);
            r.location = sensors[n];
            r.phi.resize(m);
            for (int k = 0; k < m; ++k) r.phi(k) = phi_rng.uniform();
            const double clean = r.phi.dot(l);
            const double raw = std::abs(clean + noise_std * noise_rng.normal());
            const auto cell = quantize(quantizer, raw);
            const auto iv = interval_of(quantizer, cell.index);
            r.raw = raw;
            r.q_index = cell.index;
            r.y = iv.y;
            r.eps = iv.eps;
            r.clipped = cell.clipped;
            if (cell.clipped) ++clipped;
            if (quantize(quantizer, clean).index != cell.index) ++wrong;
            out.records.push_back(std::move(r));
        }
    }
    const double total = static_cast<double>(std::max<std::size_t>(1, out.records.size()));
    out.clip_rate = static_cast<double>(clipped) / total;
    out.error_rate = static_cast<double>(wrong) / total;
    return out;
}

SyntheticData synthesize_measurements(const ScenarioConfig& cfg, const GroundTruthField& field) {
    const auto sensors = draw_uniform_points(cfg, cfg.sensors, cfg.seeds.sensors, Stream::Sensors);
    return synthesize_measurements(cfg, field, sensors, calibrate_quantizer(cfg, field));
}

Scenario build_scenario(const ScenarioConfig& cfg, int evaluation_points) {
    cfg.validate();
    auto sensors = draw_uniform_points(cfg, cfg.sensors, cfg.seeds.sensors, Stream::Sensors);
    auto eval = draw_uniform_points(cfg, evaluation_points, cfg.seeds.evaluation, Stream::Evaluation);
    std::vector<Location> support = sensors;
    support.insert(support.end(), eval.begin(), eval.end());
    auto field = gain_field(cfg, support);
    auto data = synthesize_measurements(cfg, field, sensors, calibrate_quantizer(cfg, field));
    return Scenario{std::move(sensors), std::move(eval), std::move(field), std::move(data)};
}

}  // namespace psdmap
