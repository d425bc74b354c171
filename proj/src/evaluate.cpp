#include "psdmap/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

namespace psdmap {

std::string to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::GaussianNonparametric: return "gk";
        case EstimatorKind::GaussianSemiparametric: return "gk-pathloss";
        case EstimatorKind::ThinPlateSpline: return "tps";
        case EstimatorKind::Ridge: return "ridge";
    }
    return "?";
}

EstimatorKind estimator_from_string(const std::string& s) {
    if (s == "gk") return EstimatorKind::GaussianNonparametric;
    if (s == "gk-pathloss") return EstimatorKind::GaussianSemiparametric;
    if (s == "tps") return EstimatorKind::ThinPlateSpline;
    if (s == "ridge") return EstimatorKind::Ridge;
    throw ConfigError("estimator.kind", "unknown estimator '" + s + "' (gk, gk-pathloss, tps, ridge)");
}

std::string to_string(QuantizerKind k) { return k == QuantizerKind::Cpq ? "cpq" : "uq"; }

QuantizerKind quantizer_from_string(const std::string& s) {
    if (s == "uq") return QuantizerKind::Uniform;
    if (s == "cpq") return QuantizerKind::Cpq;
    throw ConfigError("scenario.quantizer.kind", "unknown quantizer '" + s + "' (uq, cpq)");
}

std::string to_string(Schedule s) { return s == Schedule::RoundRobin ? "round-robin" : "uniform"; }

Schedule schedule_from_string(const std::string& s) {
    if (s == "round-robin") return Schedule::RoundRobin;
    if (s == "uniform") return Schedule::UniformRandom;
    throw ConfigError("online.schedule", "unknown schedule '" + s + "' (round-robin, uniform)");
}

namespace {

KernelSpec gaussian_kernel(const std::vector<double>& widths, int channels) {
    if (widths.empty()) return KernelSpec::diagonal_gaussian(std::vector<double>(static_cast<std::size_t>(channels), 0.12));
    if (static_cast<int>(widths.size()) != channels)
        throw ConfigError("estimator.widths", "needs one width per channel (" + std::to_string(channels) + ")");
    return KernelSpec::diagonal_gaussian(widths);
}

std::vector<Location> sensor_locations(const std::vector<MeasurementRecord>& records) {
    std::vector<Location> out;
    for (const auto& r : records) {
        if (r.is_virtual) continue;
        if (std::find(out.begin(), out.end(), r.location) == out.end()) out.push_back(r.location);
    }
    return out;
}

}  // namespace

EstimatorFit fit_estimator(const EstimatorConfig& est, const ScenarioConfig& scenario,
                           const std::vector<MeasurementRecord>& records, const QuantizerSpec& quantizer) {
    if (!(est.lambda > 0.0)) throw ConfigError("estimator.lambda", "must be positive");
    const int m = scenario.channels();
    std::vector<MeasurementRecord> data = records;
    if (est.nonnegativity && est.kind != EstimatorKind::Ridge) {
        const auto virt = virtual_records(sensor_locations(records), quantizer, m);
        data.insert(data.end(), virt.begin(), virt.end());
    }
    EstimatorFit out;
    switch (est.kind) {
        case EstimatorKind::GaussianNonparametric: {
            auto fit = fit_svm_nonparametric(data, gaussian_kernel(est.widths, m), est.lambda, est.fit);
            out.estimate = std::move(fit.estimate);
            out.dual = std::move(fit.dual);
            break;
        }
        case EstimatorKind::GaussianSemiparametric: {
            std::vector<Location> tx;
            for (const auto& t : scenario.transmitters) tx.push_back(t.position);
            const auto basis = BasisSpec::pathloss(std::move(tx), scenario.gamma, scenario.delta);
            auto fit = fit_svm_semiparametric(data, gaussian_kernel(est.widths, m), basis, est.lambda, est.fit);
            out.estimate = std::move(fit.estimate);
            out.dual = std::move(fit.dual);
            break;
        }
        case EstimatorKind::ThinPlateSpline: {
            const auto kernel = KernelSpec::tps(est.tps_order, scenario.dim, m);
            auto fit = fit_svm_cpd(data, kernel, BasisSpec::tps_polynomial(scenario.dim), est.lambda, est.fit);
            out.estimate = std::move(fit.estimate);
            out.dual = std::move(fit.dual);
            break;
        }
        case EstimatorKind::Ridge:
            out.estimate = fit_ridge(data, gaussian_kernel(est.widths, m), est.lambda);
            break;
    }
    return out;
}

double nmse(const Matrix& truth, const Matrix& estimate) {
    if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols())
        throw DimensionError("nmse: truth and estimate shapes differ");
    const double den = truth.squaredNorm();
    if (!(den > 0.0)) throw Error("nmse: the true field is identically zero on the evaluation points");
    return (truth - estimate).squaredNorm() / den;
}

double nmse(const MapEstimate& estimate, const GroundTruthField& field, const std::vector<Location>& points) {
    return nmse(field.evaluate(points), evaluate_map(estimate, points));
}

SignTest paired_sign_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("paired_sign_test: samples differ in length");
    SignTest st;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::isnan(a[i]) || std::isnan(b[i])) continue;
        if (a[i] < b[i]) ++st.wins;
        else if (a[i] > b[i]) ++st.losses;
        else ++st.ties;
    }
    const int n = st.wins + st.losses;
    // P(X >= wins), X ~ Binomial(n, 1/2), summed in log space.
    double p = 0.0;
    for (int k = st.wins; k <= n; ++k) {
        const double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        p += std::exp(logc - n * std::log(2.0));
    }
    st.p_value = std::min(1.0, n == 0 ? 1.0 : p);
    return st;
}

std::vector<SweepCell> SweepSpec::cells() const {
    const std::vector<int> ns = sensors.empty() ? std::vector<int>{base.sensors} : sensors;
    const std::vector<int> bs = bits.empty() ? std::vector<int>{base.quantizer.bits} : bits;
    const std::vector<int> ps = per_sensor.empty() ? std::vector<int>{base.per_sensor} : per_sensor;
    const std::vector<QuantizerKind> qs = quantizers.empty() ? std::vector<QuantizerKind>{base.quantizer.kind} : quantizers;
    const std::vector<bool> nn = nonnegativity.empty() ? std::vector<bool>{estimator.nonnegativity} : nonnegativity;
    const std::vector<EstimatorKind> es = estimators.empty() ? std::vector<EstimatorKind>{estimator.kind} : estimators;
    const std::vector<double> vs = noise_variances.empty() ? std::vector<double>{base.noise_variance} : noise_variances;
    std::vector<SweepCell> out;
    for (auto e : es)
        for (auto q : qs)
            for (bool v : nn)
                for (double s2 : vs)
                    for (int p : ps)
                        for (int b : bs)
                            for (int n : ns) out.push_back({n, b, p, q, v, e, s2});
    return out;
}

void SweepSpec::validate() const {
    base.validate();
    if (runs < 1) throw ConfigError("sweep.runs", "must be at least 1");
    if (eval_points < 1) throw ConfigError("sweep.eval_points", "must be at least 1");
    if (threads < 1) throw ConfigError("sweep.threads", "must be at least 1");
    for (int n : sensors)
        if (n < 1) throw ConfigError("sweep.sensors", "entries must be at least 1");
    for (int b : bits)
        if (b < 1 || b > 24) throw ConfigError("sweep.bits", "entries must lie in [1, 24]");
    for (int p : per_sensor)
        if (p < 1) throw ConfigError("sweep.per_sensor", "entries must be at least 1");
    for (double v : noise_variances)
        if (!(v >= 0.0)) throw ConfigError("sweep.noise_variances", "entries must be nonnegative");
}

const ResultRow& ResultTable::at(const SweepCell& cell) const {
    for (const auto& r : rows)
        if (r.cell == cell) return r;
    throw Error("result table has no such cell");
}

ScenarioSeeds run_seeds(std::uint64_t master, int run) {
    const auto r = static_cast<std::uint64_t>(run);
    ScenarioSeeds s;
    s.field = derive_seed(master, r, 1);
    s.sensors = derive_seed(master, r, 2);
    s.phi = derive_seed(master, r, 3);
    s.noise = derive_seed(master, r, 4);
    s.calibration = derive_seed(master, r, 5);
    s.evaluation = derive_seed(master, r, 6);
    return s;
}

namespace {

struct RunOutcome {
    double nmse = std::numeric_limits<double>::quiet_NaN();
    double clip_rate = 0.0;
    double error_rate = 0.0;
    double seconds = 0.0;
};

std::vector<RunOutcome> sweep_run(const SweepSpec& spec, const std::vector<SweepCell>& cells, int run) {
    ScenarioConfig cfg = spec.base;
    cfg.seeds = run_seeds(spec.master_seed, run);
    int max_n = 0;
    for (const auto& c : cells) max_n = std::max(max_n, c.sensors);
    const auto sensors = draw_uniform_points(cfg, max_n, cfg.seeds.sensors, Stream::Sensors);
    const auto eval = draw_uniform_points(cfg, spec.eval_points, cfg.seeds.evaluation, Stream::Evaluation);
    std::vector<Location> support = sensors;
    support.insert(support.end(), eval.begin(), eval.end());
    const auto field = gain_field(cfg, support);
    const Matrix truth = field.evaluate(eval);

    std::map<double, std::vector<double>> samples;  // calibration draws per noise variance
    std::vector<RunOutcome> out(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        const auto start = std::chrono::steady_clock::now();
        ScenarioConfig cc = cfg;
        cc.sensors = c.sensors;
        cc.per_sensor = c.per_sensor;
        cc.noise_variance = c.noise_variance;
        cc.quantizer.bits = c.bits;
        cc.quantizer.kind = c.quantizer;
        auto it = samples.find(c.noise_variance);
        if (it == samples.end())
            it = samples.emplace(c.noise_variance,
                                 power_samples(cc, field, cc.quantizer.calibration_draws, std::sqrt(c.noise_variance)))
                     .first;
        const QuantizerSpec q = c.quantizer == QuantizerKind::Cpq
                                    ? calibrate_cpq(it->second, c.bits)
                                    : calibrate_uniform(it->second, c.bits, cc.quantizer.clip_prob);
        const std::vector<Location> subset(sensors.begin(), sensors.begin() + c.sensors);
        const auto data = synthesize_measurements(cc, field, subset, q);
        out[i].clip_rate = data.clip_rate;
        out[i].error_rate = data.error_rate;
        EstimatorConfig est = spec.estimator;
        est.kind = c.estimator;
        est.nonnegativity = c.nonnegativity;
        try {
            const auto fit = fit_estimator(est, cc, data.records, q);
            out[i].nmse = nmse(truth, evaluate_map(fit.estimate, eval));
        } catch (const SolverError&) {
            // recorded as a failed run for this cell
        }
        out[i].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return out;
}

}  // namespace

ResultTable run_sweep(const SweepSpec& spec) {
    spec.validate();
    const auto cells = spec.cells();
    std::vector<std::vector<RunOutcome>> outcomes(static_cast<std::size_t>(spec.runs));
    const int workers = std::min(spec.threads, spec.runs);
    if (workers <= 1) {
        for (int r = 0; r < spec.runs; ++r) outcomes[static_cast<std::size_t>(r)] = sweep_run(spec, cells, r);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (int r = w; r < spec.runs; r += workers)
                        outcomes[static_cast<std::size_t>(r)] = sweep_run(spec, cells, r);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    ResultTable table;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        ResultRow row;
        row.cell = cells[i];
        double sum = 0.0, sq = 0.0;
        int ok = 0;
        for (int r = 0; r < spec.runs; ++r) {
            const auto& o = outcomes[static_cast<std::size_t>(r)][i];
            row.nmse_runs.push_back(o.nmse);
            row.clip_rate += o.clip_rate / spec.runs;
            row.error_rate += o.error_rate / spec.runs;
            row.wall_time += o.seconds;
            if (std::isnan(o.nmse)) {
                ++row.failures;
                continue;
            }
            sum += o.nmse;
            sq += o.nmse * o.nmse;
            ++ok;
        }
        if (ok > 0) {
            row.nmse_mean = sum / ok;
            const double var = ok > 1 ? std::max(0.0, (sq - ok * row.nmse_mean * row.nmse_mean) / (ok - 1)) : 0.0;
            row.nmse_se = std::sqrt(var / ok);
        } else {
            row.nmse_mean = std::numeric_limits<double>::quiet_NaN();
            row.nmse_se = std::numeric_limits<double>::quiet_NaN();
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::vector<std::size_t> presentation_order(Schedule s, std::size_t count, int steps, std::uint64_t seed) {
    if (count == 0) throw DimensionError("presentation_order: no records");
    std::vector<std::size_t> out(static_cast<std::size_t>(std::max(0, steps)));
    CounterRng rng(seed, Stream::Schedule);
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = s == Schedule::RoundRobin ? t % count : rng.below(count);
    return out;
}

std::vector<TraceRow> online_trace(const ScenarioConfig& cfg, const OnlineTraceSpec& spec) {
    return online_trace(cfg, build_scenario(cfg, spec.eval_points), spec);
}

std::vector<TraceRow> online_trace(const ScenarioConfig& cfg, const Scenario& sc, const OnlineTraceSpec& spec) {
    if (spec.steps < 1) throw ConfigError("online.steps", "must be at least 1");
    if (spec.comparator_every < 1) throw ConfigError("online.comparator_every", "must be at least 1");
    const auto& records = sc.data.records;
    // Round robin visits sensors in turn: record p of every sensor before record p + 1.
    std::vector<std::size_t> interleaved;
    for (int p = 0; p < cfg.per_sensor; ++p)
        for (std::size_t n = 0; n < sc.sensors.size(); ++n)
            interleaved.push_back(n * static_cast<std::size_t>(cfg.per_sensor) + static_cast<std::size_t>(p));
    const auto order = presentation_order(spec.schedule, records.size(), spec.steps, spec.schedule_seed);

    OnlineOptions opts;
    opts.kernel = gaussian_kernel(spec.widths, cfg.channels());
    opts.lambda = spec.lambda;
    opts.mu = spec.mu;
    auto state = OnlineState::shared(opts, sc.sensors);
    RegretLedger ledger(spec.lambda, spec.mu);
    const Matrix truth = sc.field.evaluate(sc.evaluation_points);

    std::vector<MeasurementRecord> seen;
    std::vector<TraceRow> rows;
    double anchor_t = 0.0, anchor_lower = 0.0;
    for (int t = 1; t <= spec.steps; ++t) {
        std::size_t idx = order[static_cast<std::size_t>(t - 1)];
        if (spec.schedule == Schedule::RoundRobin) idx = interleaved[idx];
        const auto& rec = records[idx];
        seen.push_back(rec);
        ledger.observe(opts.kernel, rec);

        TraceRow row;
        row.t = t;
        row.norm = std::sqrt(state.norm_sq());
        row.norm_bound = ledger.norm_bound();
        double loss_sum = 0.0;
        for (const auto& r : records)
            loss_sum += loss_value(OnlineLoss::L1eps, r.y - r.phi.dot(state.predict(r.location)), r.eps);
        row.risk = loss_sum / static_cast<double>(records.size()) + spec.lambda * state.norm_sq();
        row.nmse = nmse(truth, evaluate_map(state.snapshot(), sc.evaluation_points));

        const auto rep = state.step(rec);
        row.cost = rep.cost;
        ledger.record(rep.cost);
        row.running_average = ledger.online_cost_sum / t;
        row.envelope = regret_envelope(ledger, t);
        if (t == 1 || t == spec.steps || t % spec.comparator_every == 0) {
            const auto cmp = batch_comparator(seen, opts.kernel, spec.lambda, spec.fit);
            anchor_t = t;
            anchor_lower = cmp.lower;
            row.comparator = cmp.lower;
            row.comparator_exact = true;
        } else {
            row.comparator = anchor_t * anchor_lower / t;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace psdmap
