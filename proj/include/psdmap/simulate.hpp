#pragma once

#include "psdmap/model.hpp"
#include "psdmap/quantize.hpp"
#include "psdmap/rng.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace psdmap {

struct Transmitter {
    double power = 1.0;  // A_m, linear
    Location position;   // chi_m
};

struct QuantizerDirective {
    int bits = 5;
    QuantizerKind kind = QuantizerKind::Uniform;
    double clip_prob = 1e-3;  // uniform quantizer only
    int calibration_draws = 10000;
};

struct ScenarioSeeds {
    std::uint64_t field = 1;
    std::uint64_t sensors = 2;
    std::uint64_t phi = 3;
    std::uint64_t noise = 4;
    std::uint64_t calibration = 5;
    std::uint64_t evaluation = 6;
};

struct ScenarioConfig {
    int dim = 1;
    Vector region_lower;  // empty means [0, 1]^dim
    Vector region_upper;
    std::vector<Transmitter> transmitters;
    double noise_power = 0.75;  // l_M
    double gamma = 3.0;
    double delta = 1e-2;
    double shadow_variance = 2.0;  // sigma_s^2 in dB^2
    double shadow_rho = 0.8;
    int sensors = 40;
    int per_sensor = 5;
    double noise_variance = 0.0;  // sigma_eta^2
    QuantizerDirective quantizer;
    ScenarioSeeds seeds;

    int channels() const { return static_cast<int>(transmitters.size()) + 1; }
    Vector lower() const;
    Vector upper() const;
    /// Throws ConfigError naming the offending key (as in the config file, prefixed "scenario.").
    void validate() const;

    /// d = 1 on [0, 1] with four transmitters at 0.1, 0.2, 0.4, 0.8 (M = 5).
    static ScenarioConfig line();
    /// d = 2 on [0, 1]^2 with three transmitters (M = 4).
    static ScenarioConfig plane();
};

/// Points uniform over the scenario region, drawn from the given stream.
std::vector<Location> draw_uniform_points(const ScenarioConfig& cfg, int count, std::uint64_t seed, Stream stream);

/// Jointly Gaussian shadowing in dB with covariance sigma_s2 * rho^|x - x'| at the points,
/// one independent vector per transmitter.
std::vector<Vector> sample_shadowing(const std::vector<Location>& points, double sigma_s2, double rho,
                                     std::uint64_t seed, int transmitters = 1);

/// Channel gains l_m(x) = A_m (delta + |x - chi_m|)^-gamma 10^(s_m(x) / 10), l_M = noise power.
/// Shadowing is known exactly on the support points and extended elsewhere by its
/// conditional mean (simple kriging).
class GroundTruthField {
public:
    GroundTruthField(const ScenarioConfig& cfg, std::vector<Location> support, std::vector<Vector> shadow_db);

    int channels() const { return static_cast<int>(tx_.size()) + 1; }
    const std::vector<Location>& support() const { return support_; }
    const std::vector<Vector>& shadow() const { return shadow_; }

    double shadow_db(int m, const Location& x) const;
    PowerVector operator()(const Location& x) const;
    /// Row i holds l(points[i]).
    Matrix evaluate(const std::vector<Location>& points) const;

private:
    std::vector<Transmitter> tx_;
    double noise_power_;
    double gamma_;
    double delta_;
    double sigma_s2_;
    double rho_;
    std::vector<Location> support_;
    std::vector<Vector> shadow_;
    std::vector<Vector> weights_;  // C^{-1} s per transmitter
    std::map<std::vector<double>, std::size_t> index_;
};

/// Draws the shadowing from cfg.seeds.field on `support` and builds the field.
GroundTruthField gain_field(const ScenarioConfig& cfg, const std::vector<Location>& support);

/// Builds the field from an explicit shadowing draw.
GroundTruthField gain_field(const ScenarioConfig& cfg, const std::vector<Location>& support,
                            std::vector<Vector> shadow_db);

/// Monte Carlo samples of |phi^T l(x) + eta| with x uniform over the region and phi ~ U[0,1]^M.
std::vector<double> power_samples(const ScenarioConfig& cfg, const GroundTruthField& field, int draws,
                                  double noise_std);

/// Quantizer from the directive in cfg, calibrated on power_samples with the scenario noise.
QuantizerSpec calibrate_quantizer(const ScenarioConfig& cfg, const GroundTruthField& field);

/// Fraction of draws with Q(|pi + eta|) != Q(pi) over `draws` common random numbers.
double measurement_error_rate(const ScenarioConfig& cfg, const GroundTruthField& field, const QuantizerSpec& q,
                              double noise_std, int draws, std::uint64_t seed);

/// Noise standard deviation whose measurement error rate is `target`, found by bisection
/// on a fixed set of draws.
double calibrate_noise_std(const ScenarioConfig& cfg, const GroundTruthField& field, const QuantizerSpec& q,
                           double target = 0.15, int draws = 10000);

struct SyntheticData {
    std::vector<Location> sensors;
    std::vector<MeasurementRecord> records;
    QuantizerSpec quantizer;
    double clip_rate = 0.0;   // fraction of records outside the quantizer range
    double error_rate = 0.0;  // fraction whose cell differs from the noiseless cell
};

/// P records per sensor; sensor n's phi and noise come from substream n, so prefixes of
/// the sensor list and of each sensor's records are shared across configurations.
SyntheticData synthesize_measurements(const ScenarioConfig& cfg, const GroundTruthField& field,
                                      const std::vector<Location>& sensors, const QuantizerSpec& quantizer);

/// Sensors drawn from cfg.seeds.sensors, quantizer calibrated from the scenario.
SyntheticData synthesize_measurements(const ScenarioConfig& cfg, const GroundTruthField& field);

struct Scenario {
    std::vector<Location> sensors;
    std::vector<Location> evaluation_points;
    GroundTruthField field;
    SyntheticData data;
};

/// Sensors, evaluation points, field over their union, and measurements.
Scenario build_scenario(const ScenarioConfig& cfg, int evaluation_points = 1000);

}  // namespace psdmap
