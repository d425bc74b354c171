#pragma once

#include "psdmap/evaluate.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace psdmap {

inline constexpr int kSchemaVersion = 1;

/// Everything a CLI invocation can be configured with. Sections absent from the file keep
/// their defaults; unknown keys are rejected.
struct RunConfig {
    std::optional<std::uint64_t> seed;  // top-level master seed; overrides scenario.seeds
    ScenarioConfig scenario = ScenarioConfig::line();
    EstimatorConfig estimator;

    // fit inputs, resolved against the directory holding the config file
    std::filesystem::path measurements;
    std::filesystem::path quantizer;

    int eval_points = 1000;
    int grid_points = 0;  // per axis; 0 picks 101 / 41 / 11 for d = 1 / 2 / 3

    SweepSpec sweep;  // base and estimator are copied from the sections above
    OnlineTraceSpec online;

    /// Applies a master seed to every random source: scenario streams, sweep and schedule.
    void apply_seed(std::uint64_t master);
    int grid_per_axis() const;
};

/// Parses and validates a config document. Relative data paths are resolved against `base_dir`.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Canonical JSON with every field spelled out. Data paths are written as given.
std::string dump_config(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// CSV schemas

/// sensor_index, x1..xd, phi1..phiM, q_index, y, eps, raw, is_virtual. Empty q_index / raw mean absent.
std::string measurements_csv(const std::vector<MeasurementRecord>& records);
std::vector<MeasurementRecord> parse_measurements_csv(const std::string& text);

/// kind, index, boundary: one row per tau_i.
std::string quantizer_csv(const QuantizerSpec& q);
QuantizerSpec parse_quantizer_csv(const std::string& text);

/// x1..xd followed by one column per named block, e.g. prefixes {"l"} or {"l", "lhat"}.
std::string map_grid_csv(const std::vector<Location>& points, const std::vector<Matrix>& values,
                         const std::vector<std::string>& prefixes);

/// Regular grid over the scenario region with `per_axis` points along each axis.
std::vector<Location> grid_points(const ScenarioConfig& cfg, int per_axis);

std::string sweep_csv(const ResultTable& table, bool wall_time = false);
/// One row per cell and run with the per-run NMSE (empty when the fit failed).
std::string sweep_runs_csv(const ResultTable& table);
std::string trace_csv(const std::vector<TraceRow>& rows);

/// Residual report: per record the fitted power and its distance outside the tube.
std::string residuals_csv(const std::vector<MeasurementRecord>& records, const MapEstimate& estimate);

/// Self-contained description of a fitted map: kernel, basis, anchors and coefficients.
std::string estimate_json(const MapEstimate& estimate);
MapEstimate parse_estimate_json(const std::string& text);

}  // namespace psdmap
