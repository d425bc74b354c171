#pragma once

#include "psdmap/batch.hpp"
#include "psdmap/online.hpp"
#include "psdmap/simulate.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace psdmap {

enum class EstimatorKind {
    GaussianNonparametric,   // diagonal Gaussian kernel, no parametric part
    GaussianSemiparametric,  // diagonal Gaussian kernel plus the transmitter pathloss basis
    ThinPlateSpline,         // TPS kernel with the affine basis
    Ridge,                   // kernel ridge regression on the raw powers
};

std::string to_string(EstimatorKind k);
EstimatorKind estimator_from_string(const std::string& s);
std::string to_string(QuantizerKind k);
QuantizerKind quantizer_from_string(const std::string& s);

struct EstimatorConfig {
    EstimatorKind kind = EstimatorKind::GaussianNonparametric;
    double lambda = 1e-6;
    std::vector<double> widths;  // sigma_m^2 per channel; empty means 0.12 everywhere
    int tps_order = 2;
    bool nonnegativity = false;  // append M virtual measurements per sensor
    FitOptions fit;
};

struct EstimatorFit {
    MapEstimate estimate;
    std::optional<DualSolution> dual;  // absent for ridge
};

/// Fits the configured estimator. The scenario supplies the region dimension, channel count
/// and transmitter positions (pathloss basis); the quantizer supplies the virtual-measurement range.
EstimatorFit fit_estimator(const EstimatorConfig& est, const ScenarioConfig& scenario,
                           const std::vector<MeasurementRecord>& records, const QuantizerSpec& quantizer);

/// sum_x |l(x) - l_hat(x)|^2 / sum_x |l(x)|^2 over row-aligned matrices.
double nmse(const Matrix& truth, const Matrix& estimate);

double nmse(const MapEstimate& estimate, const GroundTruthField& field, const std::vector<Location>& points);

/// One-sided paired sign test of "a < b": wins = #(a_i < b_i), ties dropped,
/// p = P(Binomial(wins + losses, 1/2) >= wins).
struct SignTest {
    int wins = 0;
    int losses = 0;
    int ties = 0;
    double p_value = 1.0;
};
SignTest paired_sign_test(const std::vector<double>& a, const std::vector<double>& b);

struct SweepCell {
    int sensors = 0;
    int bits = 0;
    int per_sensor = 0;
    QuantizerKind quantizer = QuantizerKind::Uniform;
    bool nonnegativity = false;
    EstimatorKind estimator = EstimatorKind::GaussianNonparametric;
    double noise_variance = 0.0;

    bool operator==(const SweepCell&) const = default;
};

struct SweepSpec {
    ScenarioConfig base;
    EstimatorConfig estimator;  // lambda, widths, tps order, solver options
    std::vector<int> sensors;
    std::vector<int> bits;
    std::vector<int> per_sensor;
    std::vector<QuantizerKind> quantizers;
    std::vector<bool> nonnegativity;
    std::vector<EstimatorKind> estimators;
    std::vector<double> noise_variances;
    int runs = 10;
    int eval_points = 1000;
    std::uint64_t master_seed = 1;
    int threads = 1;

    /// Grids left empty take the single value from `base` / `estimator`.
    std::vector<SweepCell> cells() const;
    void validate() const;
};

struct ResultRow {
    SweepCell cell;
    double nmse_mean = 0.0;
    double nmse_se = 0.0;
    double clip_rate = 0.0;
    double error_rate = 0.0;
    double wall_time = 0.0;  // seconds, summed over runs
    int failures = 0;
    std::vector<double> nmse_runs;  // per run, NaN where the estimator failed
};

struct ResultTable {
    std::vector<ResultRow> rows;
    const ResultRow& at(const SweepCell& cell) const;
};

/// Scenario seeds for run `run` of a sweep; shared by every cell (common random numbers).
ScenarioSeeds run_seeds(std::uint64_t master, int run);

/// Averages NMSE over runs for every grid cell. Within a run all cells see the same field,
/// sensor prefix, filter weights and noise draws.
ResultTable run_sweep(const SweepSpec& spec);

enum class Schedule { RoundRobin, UniformRandom };
std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& s);

struct OnlineTraceSpec {
    int steps = 500;
    double mu = 1.0;
    double lambda = 1e-6;
    std::vector<double> widths;  // Gaussian widths; empty means 0.12
    Schedule schedule = Schedule::UniformRandom;
    std::uint64_t schedule_seed = 1;
    /// Exact batch comparator every this many steps (and at t = 1 and t = steps).
    int comparator_every = 25;
    int eval_points = 1000;
    FitOptions fit;
};

struct TraceRow {
    int t = 0;
    double cost = 0.0;              // C(w^(t)) on the t-th record
    double running_average = 0.0;   // (1/t) sum_{s <= t} C(w^(s))
    double comparator = 0.0;        // certified lower bound on the batch average at t
    bool comparator_exact = false;  // true where the batch problem was solved at t
    double envelope = 0.0;          // a1 / sqrt(t) + a2 / t
    double risk = 0.0;              // regularized empirical risk of w^(t) over the whole data set
    double nmse = 0.0;              // NMSE of w^(t)
    double norm = 0.0;              // |w^(t)|_H
    double norm_bound = 0.0;
};

/// Presentation order of `count` records for `steps` steps.
std::vector<std::size_t> presentation_order(Schedule s, std::size_t count, int steps, std::uint64_t seed);

/// Shared-anchor online estimation on a synthesized scenario.
std::vector<TraceRow> online_trace(const ScenarioConfig& cfg, const OnlineTraceSpec& spec);

/// Same on a given scenario.
std::vector<TraceRow> online_trace(const ScenarioConfig& cfg, const Scenario& scenario, const OnlineTraceSpec& spec);

}  // namespace psdmap
