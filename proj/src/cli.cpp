#include "psdmap/cli.hpp"

#include "psdmap/io.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <optional>

namespace psdmap {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::string format = "csv";
};

RunConfig load(const Common& c) {
    if (c.config.empty()) throw ConfigError("--config", "a config file is required");
    auto cfg = load_config(c.config);
    if (c.seed) cfg.apply_seed(*c.seed);
    cfg.sweep.base = cfg.scenario;
    cfg.sweep.estimator = cfg.estimator;
    return cfg;
}

fs::path out_dir(const Common& c) {
    const fs::path dir(c.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
    return dir;
}

void emit(const fs::path& dir, const std::string& name, const std::string& content, std::ostream& out) {
    write_atomic(dir / name, content);
    out << "wrote " << (dir / name).string() << "\n";
}

/// Records must agree with the scenario's dimension and channel count.
void check_data(const RunConfig& cfg, const std::vector<MeasurementRecord>& records) {
    if (records.empty()) throw ConfigError("data.measurements", "the measurement file has no records");
    for (const auto& r : records) {
        if (r.location.dim() != cfg.scenario.dim)
            throw ConfigError("scenario.dim", "measurements have " + std::to_string(r.location.dim()) +
                                                  " coordinates but the scenario has dim " +
                                                  std::to_string(cfg.scenario.dim));
        if (r.phi.size() != cfg.scenario.channels())
            throw ConfigError("scenario.transmitters", "measurements have " + std::to_string(r.phi.size()) +
                                                           " channels but the scenario describes " +
                                                           std::to_string(cfg.scenario.channels()));
    }
}

std::string summary_csv(const std::vector<std::pair<std::string, std::string>>& kv) {
    std::string head, row;
    for (std::size_t i = 0; i < kv.size(); ++i) {
        head += (i ? "," : "") + kv[i].first;
        row += (i ? "," : "") + kv[i].second;
    }
    return head + "\n" + row + "\n";
}

int cmd_simulate(const Common& c, std::ostream& out) {
    auto cfg = load(c);
    const auto dir = out_dir(c);
    const auto sc = build_scenario(cfg.scenario, cfg.eval_points);
    const auto grid = grid_points(cfg.scenario, cfg.grid_per_axis());
    emit(dir, "measurements.csv", measurements_csv(sc.data.records), out);
    emit(dir, "quantizer.csv", quantizer_csv(sc.data.quantizer), out);
    emit(dir, "truth.csv", map_grid_csv(grid, {sc.field.evaluate(grid)}, {"l"}), out);
    emit(dir, "summary.csv",
         summary_csv({{"sensors", std::to_string(sc.sensors.size())},
                      {"records", std::to_string(sc.data.records.size())},
                      {"levels", std::to_string(sc.data.quantizer.levels())},
                      {"clip_rate", format_double(sc.data.clip_rate)},
                      {"error_rate", format_double(sc.data.error_rate)}}),
         out);
    RunConfig fit_cfg = cfg;
    fit_cfg.measurements = "measurements.csv";
    fit_cfg.quantizer = "quantizer.csv";
    emit(dir, "fit_config.json", dump_config(fit_cfg), out);
    return kExitOk;
}

int cmd_calibrate(const Common& c, std::ostream& out) {
    auto cfg = load(c);
    const auto dir = out_dir(c);
    const auto sensors = draw_uniform_points(cfg.scenario, cfg.scenario.sensors, cfg.scenario.seeds.sensors, Stream::Sensors);
    const auto field = gain_field(cfg.scenario, sensors);
    const auto q = calibrate_quantizer(cfg.scenario, field);
    emit(dir, "quantizer.csv", quantizer_csv(q), out);
    out << to_string(q.kind) << " quantizer, " << q.levels() << " levels on [" << format_double(q.lower()) << ", "
        << format_double(q.upper()) << ")\n";
    return kExitOk;
}

int cmd_fit(const Common& c, std::ostream& out) {
    auto cfg = load(c);
    if (cfg.measurements.empty()) throw ConfigError("data.measurements", "fit needs a measurement file");
    const auto records = parse_measurements_csv(read_file(cfg.measurements));
    check_data(cfg, records);
    QuantizerSpec q;
    if (!cfg.quantizer.empty()) q = parse_quantizer_csv(read_file(cfg.quantizer));
    else if (cfg.estimator.nonnegativity)
        throw ConfigError("data.quantizer", "nonnegativity needs the quantizer file");
    const auto dir = out_dir(c);
    const auto fit = fit_estimator(cfg.estimator, cfg.scenario, records, q);
    const auto grid = grid_points(cfg.scenario, cfg.grid_per_axis());
    emit(dir, "estimate.json", estimate_json(fit.estimate), out);
    emit(dir, "map.csv", map_grid_csv(grid, {evaluate_map(fit.estimate, grid)}, {"lhat"}), out);
    emit(dir, "residuals.csv", residuals_csv(records, fit.estimate), out);
    int inside = 0;
    for (const auto& r : records) {
        const double f = r.phi.dot(evaluate_map(fit.estimate, r.location));
        if (std::abs(r.y - f) <= r.eps * (1.0 + 1e-9) + 1e-12) ++inside;
    }
    out << "fit " << to_string(cfg.estimator.kind) << ": " << records.size() << " records, "
        << fit.estimate.anchors.size() << " anchors, " << inside << " inside their intervals";
    if (fit.dual) out << ", duality gap " << format_double(fit.dual->gap);
    out << "\n";
    return kExitOk;
}

int cmd_evaluate(const Common& c, std::ostream& out) {
    auto cfg = load(c);
    const auto dir = out_dir(c);
    const auto sc = build_scenario(cfg.scenario, cfg.eval_points);
    const auto fit = fit_estimator(cfg.estimator, cfg.scenario, sc.data.records, sc.data.quantizer);
    const double e = nmse(fit.estimate, sc.field, sc.evaluation_points);
    const auto grid = grid_points(cfg.scenario, cfg.grid_per_axis());
    emit(dir, "evaluation.csv",
         summary_csv({{"estimator", to_string(cfg.estimator.kind)},
                      {"quantizer", to_string(cfg.scenario.quantizer.kind)},
                      {"bits", std::to_string(cfg.scenario.quantizer.bits)},
                      {"sensors", std::to_string(cfg.scenario.sensors)},
                      {"per_sensor", std::to_string(cfg.scenario.per_sensor)},
                      {"nonnegativity", cfg.estimator.nonnegativity ? "1" : "0"},
                      {"eval_points", std::to_string(cfg.eval_points)},
                      {"nmse", format_double(e)},
                      {"clip_rate", format_double(sc.data.clip_rate)},
                      {"error_rate", format_double(sc.data.error_rate)}}),
         out);
    emit(dir, "map.csv", map_grid_csv(grid, {sc.field.evaluate(grid), evaluate_map(fit.estimate, grid)}, {"l", "lhat"}),
         out);
    out << "nmse " << format_double(e) << "\n";
    return kExitOk;
}

int cmd_sweep(const Common& c, bool wall_time, std::optional<int> threads, std::ostream& out) {
    auto cfg = load(c);
    if (threads) {
        if (*threads < 1) throw ConfigError("--threads", "must be at least 1");
        cfg.sweep.threads = *threads;
    }
    const auto dir = out_dir(c);
    const auto table = run_sweep(cfg.sweep);
    emit(dir, "sweep.csv", sweep_csv(table, wall_time), out);
    emit(dir, "sweep_runs.csv", sweep_runs_csv(table), out);
    return kExitOk;
}

int cmd_online(const Common& c, std::ostream& out) {
    auto cfg = load(c);
    const auto dir = out_dir(c);
    auto spec = cfg.online;
    spec.fit = cfg.estimator.fit;
    const auto rows = online_trace(cfg.scenario, spec);
    emit(dir, "trace.csv", trace_csv(rows), out);
    out << "final running average " << format_double(rows.back().running_average) << ", nmse "
        << format_double(rows.back().nmse) << "\n";
    return kExitOk;
}

void report(std::ostream& err, const std::string& kind, const std::string& key, const std::string& message) {
    nlohmann::json line{{"error", kind}, {"message", message}};
    if (!key.empty()) line["key"] = key;
    err << line.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spectrum map estimation from quantized, compressed power measurements", "psdmap"};
    app.require_subcommand(1);
    Common common;
    bool wall_time = false;
    std::optional<int> threads;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON config file")->required();
        sub->add_option("--seed", common.seed, "master seed for every random source");
        sub->add_option("--out", common.out, "output directory")->capture_default_str();
        sub->add_option("--format", common.format, "output format")
            ->check(CLI::IsMember({"csv"}))
            ->capture_default_str();
    };
    auto* simulate = app.add_subcommand("simulate", "synthesize a scenario and its quantized measurements");
    auto* calibrate = app.add_subcommand("calibrate-quantizer", "calibrate the scenario quantizer");
    auto* fit = app.add_subcommand("fit", "fit an estimator to a measurement file");
    auto* evaluate = app.add_subcommand("evaluate", "simulate, fit and report NMSE");
    auto* sweep = app.add_subcommand("sweep", "Monte Carlo NMSE over a factor grid");
    auto* online = app.add_subcommand("online", "online estimation trace with the regret envelope");
    for (auto* s : {simulate, calibrate, fit, evaluate, sweep, online}) add_common(s);
    sweep->add_flag("--wall-time", wall_time, "add per-cell wall time (not reproducible)");
    sweep->add_option("--threads", threads, "worker threads over Monte Carlo runs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        report(err, "usage", "", e.what());
        return kExitConfig;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(common, out);
        if (calibrate->parsed()) return cmd_calibrate(common, out);
        if (fit->parsed()) return cmd_fit(common, out);
        if (evaluate->parsed()) return cmd_evaluate(common, out);
        if (sweep->parsed()) return cmd_sweep(common, wall_time, threads, out);
        if (online->parsed()) return cmd_online(common, out);
    } catch (const ConfigError& e) {
        report(err, "config", e.key(), e.what());
        return kExitConfig;
    } catch (const DimensionError& e) {
        report(err, "config", "", e.what());
        return kExitConfig;
    } catch (const SolverError& e) {
        report(err, "solver", "", e.what());
        return kExitSolver;
    } catch (const IoError& e) {
        report(err, "io", "", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        report(err, "internal", "", e.what());
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace psdmap
