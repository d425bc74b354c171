#include "psdmap/cli.hpp"
#include "psdmap/io.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <limits>
#include <sstream>

namespace py = pybind11;
using namespace psdmap;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<Location> to_locations(const RowMatrix& points) {
    std::vector<Location> out;
    out.reserve(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i) out.emplace_back(Vector(points.row(i).transpose()));
    return out;
}

RowMatrix from_locations(const std::vector<Location>& points) {
    const int dim = points.empty() ? 0 : points.front().dim();
    RowMatrix out(static_cast<Eigen::Index>(points.size()), dim);
    for (std::size_t i = 0; i < points.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = points[i].coords.transpose();
    return out;
}

py::dict records_dict(const std::vector<MeasurementRecord>& records) {
    const auto n = static_cast<Eigen::Index>(records.size());
    const int dim = records.empty() ? 0 : records.front().location.dim();
    const auto m = records.empty() ? 0 : records.front().phi.size();
    RowMatrix x(n, dim), phi(n, m);
    Vector y(n), eps(n), raw(n);
    std::vector<int> sensor(records.size()), q_index(records.size());
    std::vector<bool> is_virtual(records.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = records[static_cast<std::size_t>(i)];
        x.row(i) = r.location.coords.transpose();
        phi.row(i) = r.phi.transpose();
        y(i) = r.y;
        eps(i) = r.eps;
        raw(i) = r.raw.value_or(std::numeric_limits<double>::quiet_NaN());
        sensor[static_cast<std::size_t>(i)] = r.sensor_index;
        q_index[static_cast<std::size_t>(i)] = r.q_index.value_or(-1);
        is_virtual[static_cast<std::size_t>(i)] = r.is_virtual;
    }
    py::dict d;
    d["sensor_index"] = sensor;
    d["x"] = x;
    d["phi"] = phi;
    d["q_index"] = q_index;
    d["y"] = y;
    d["eps"] = eps;
    d["raw"] = raw;
    d["is_virtual"] = is_virtual;
    return d;
}

std::vector<MeasurementRecord> to_records(const std::vector<int>& sensor_index, const RowMatrix& x, const RowMatrix& phi,
                                          const Vector& y, const Vector& eps) {
    const auto n = static_cast<Eigen::Index>(sensor_index.size());
    if (x.rows() != n || phi.rows() != n || y.size() != n || eps.size() != n)
        throw DimensionError("sensor_index, x, phi, y and eps must have the same number of rows");
    std::vector<MeasurementRecord> out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& r = out[static_cast<std::size_t>(i)];
        r.sensor_index = sensor_index[static_cast<std::size_t>(i)];
        r.location = Location(Vector(x.row(i).transpose()));
        r.phi = phi.row(i).transpose();
        r.y = y(i);
        r.eps = eps(i);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Spectrum map estimation from quantized, compressed power measurements";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<DimensionError>(m, "DimensionError", base);
    py::register_exception<SolverError>(m, "SolverError", base);
    py::register_exception<IoError>(m, "IoError", base);

    py::class_<RunConfig>(m, "Config")
        .def_static("from_json", [](const std::string& text, const std::string& base_dir) {
            return parse_config(text, base_dir);
        }, py::arg("text"), py::arg("base_dir") = "")
        .def_static("load", [](const std::string& path) { return load_config(path); }, py::arg("path"))
        .def("to_json", &dump_config)
        .def("apply_seed", &RunConfig::apply_seed, py::arg("seed"))
        .def_property_readonly("dim", [](const RunConfig& c) { return c.scenario.dim; })
        .def_property_readonly("channels", [](const RunConfig& c) { return c.scenario.channels(); })
        .def_property_readonly("sensors", [](const RunConfig& c) { return c.scenario.sensors; })
        .def_property_readonly("estimator", [](const RunConfig& c) { return to_string(c.estimator.kind); })
        .def_property_readonly("eval_points", [](const RunConfig& c) { return c.eval_points; });

    py::class_<MapEstimate>(m, "MapEstimate")
        .def("__call__", [](const MapEstimate& e, const RowMatrix& points) {
            return RowMatrix(evaluate_map(e, to_locations(points)));
        }, py::arg("points"), "Evaluate the map at the rows of `points` (one column per channel).")
        .def_property_readonly("anchors", [](const MapEstimate& e) { return from_locations(e.anchors); })
        .def_property_readonly("c", [](const MapEstimate& e) { return e.c; })
        .def_property_readonly("theta", [](const MapEstimate& e) { return e.theta; })
        .def("to_json", &estimate_json)
        .def_static("from_json", &parse_estimate_json, py::arg("text"));

    m.def("simulate", [](const RunConfig& cfg) {
        const auto sc = build_scenario(cfg.scenario, cfg.eval_points);
        py::dict out;
        out["records"] = records_dict(sc.data.records);
        out["sensors"] = from_locations(sc.sensors);
        out["eval_points"] = from_locations(sc.evaluation_points);
        out["truth"] = RowMatrix(sc.field.evaluate(sc.evaluation_points));
        out["quantizer_boundaries"] = sc.data.quantizer.boundaries;
        out["clip_rate"] = sc.data.clip_rate;
        out["error_rate"] = sc.data.error_rate;
        return out;
    }, py::arg("config"), "Synthesize the configured scenario.");

    m.def("fit", [](const RunConfig& cfg, const std::vector<int>& sensor_index, const RowMatrix& x, const RowMatrix& phi,
                    const Vector& y, const Vector& eps) {
        if (cfg.estimator.nonnegativity) throw ConfigError("estimator.nonnegativity", "not available from Python");
        return fit_estimator(cfg.estimator, cfg.scenario, to_records(sensor_index, x, phi, y, eps), QuantizerSpec{}).estimate;
    }, py::arg("config"), py::arg("sensor_index"), py::arg("x"), py::arg("phi"), py::arg("y"), py::arg("eps"),
          "Fit the configured estimator to interval measurements.");

    m.def("evaluate", [](const RunConfig& cfg) {
        const auto sc = build_scenario(cfg.scenario, cfg.eval_points);
        const auto fit = fit_estimator(cfg.estimator, cfg.scenario, sc.data.records, sc.data.quantizer);
        return nmse(fit.estimate, sc.field, sc.evaluation_points);
    }, py::arg("config"), "Simulate, fit and return the NMSE.");

    m.def("online_trace", [](const RunConfig& cfg) {
        auto spec = cfg.online;
        spec.fit = cfg.estimator.fit;
        const auto rows = online_trace(cfg.scenario, spec);
        const auto n = static_cast<Eigen::Index>(rows.size());
        Vector cost(n), avg(n), comp(n), env(n), nm(n), norm(n), bound(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& r = rows[static_cast<std::size_t>(i)];
            cost(i) = r.cost;
            avg(i) = r.running_average;
            comp(i) = r.comparator;
            env(i) = r.envelope;
            nm(i) = r.nmse;
            norm(i) = r.norm;
            bound(i) = r.norm_bound;
        }
        py::dict out;
        out["cost"] = cost;
        out["running_average"] = avg;
        out["comparator"] = comp;
        out["envelope"] = env;
        out["nmse"] = nm;
        out["norm"] = norm;
        out["norm_bound"] = bound;
        return out;
    }, py::arg("config"), "Online estimation trace.");

    m.def("sweep_csv", [](const RunConfig& cfg) {
        auto spec = cfg.sweep;
        spec.base = cfg.scenario;
        spec.estimator = cfg.estimator;
        return sweep_csv(run_sweep(spec));
    }, py::arg("config"), "Monte Carlo sweep, returned as the sweep.csv text.");

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::vector<std::string> all{"psdmap"};
        all.insert(all.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : all) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"), "Run the command-line tool in-process; returns (exit code, stdout, stderr).");
}
