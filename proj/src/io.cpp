#include "psdmap/io.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

namespace psdmap {

using nlohmann::json;

namespace {

std::string join_key(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

/// Walks one JSON object, remembering which keys were consumed.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    template <class T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        out = convert<T>(raw(key), key_of(key));
    }

    template <class T>
    void read_list(const std::string& key, std::vector<T>& out) {
        if (!has(key)) return;
        const auto& v = raw(key);
        if (!v.is_array()) throw ConfigError(key_of(key), "expected a list");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i)
            out.push_back(convert<T>(v[i], key_of(key) + "[" + std::to_string(i) + "]"));
    }

    void read_vector(const std::string& key, Vector& out) {
        std::vector<double> tmp;
        if (!has(key)) return;
        read_list(key, tmp);
        out = Eigen::Map<const Vector>(tmp.data(), static_cast<Eigen::Index>(tmp.size()));
    }

    Section child(const std::string& key) {
        if (!has(key)) throw ConfigError(key_of(key), "missing");
        return Section(raw(key), key_of(key));
    }

    std::string key_of(const std::string& key) const { return join_key(path_, key); }

    /// Rejects keys that were never read.
    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(key_of(it.key()), "unknown key");
    }

private:
    template <class T>
    static T convert(const json& v, const std::string& key) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(key, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned()) throw ConfigError(key, "expected a nonnegative integer");
            return v.get<std::uint64_t>();
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            if (!v.is_array()) throw ConfigError(key, "expected a list of numbers");
            std::vector<double> out;
            for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<double>(v[i], key + "[" + std::to_string(i) + "]"));
            return out;
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
            return v.get<T>();
        } else {
            if (!v.is_number()) throw ConfigError(key, "expected a number");
            const double d = v.get<double>();
            if (!std::isfinite(d)) throw ConfigError(key, "expected a finite number");
            return d;
        }
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

void parse_scenario(Section s, ScenarioConfig& cfg) {
    if (s.has("preset")) {
        std::string preset;
        s.read("preset", preset);
        if (preset == "line") cfg = ScenarioConfig::line();
        else if (preset == "plane") cfg = ScenarioConfig::plane();
        else throw ConfigError(s.key_of("preset"), "unknown preset '" + preset + "' (line, plane)");
    }
    s.read("dim", cfg.dim);
    s.read_vector("region_lower", cfg.region_lower);
    s.read_vector("region_upper", cfg.region_upper);
    if (s.has("transmitters")) {
        const auto& list = s.raw("transmitters");
        if (!list.is_array()) throw ConfigError(s.key_of("transmitters"), "expected a list");
        cfg.transmitters.clear();
        for (std::size_t i = 0; i < list.size(); ++i) {
            Section t(list[i], s.key_of("transmitters") + "[" + std::to_string(i) + "]");
            Transmitter tx;
            t.read("power", tx.power);
            if (!t.has("position")) throw ConfigError(t.key_of("position"), "missing");
            t.read_vector("position", tx.position.coords);
            t.finish();
            cfg.transmitters.push_back(std::move(tx));
        }
    }
    s.read("noise_power", cfg.noise_power);
    s.read("gamma", cfg.gamma);
    s.read("delta", cfg.delta);
    if (s.has("shadowing")) {
        auto sh = s.child("shadowing");
        sh.read("variance", cfg.shadow_variance);
        sh.read("rho", cfg.shadow_rho);
        sh.finish();
    }
    s.read("sensors", cfg.sensors);
    s.read("per_sensor", cfg.per_sensor);
    s.read("noise_variance", cfg.noise_variance);
    if (s.has("quantizer")) {
        auto q = s.child("quantizer");
        q.read("bits", cfg.quantizer.bits);
        if (q.has("kind")) {
            std::string kind;
            q.read("kind", kind);
            cfg.quantizer.kind = quantizer_from_string(kind);
        }
        q.read("clip_prob", cfg.quantizer.clip_prob);
        q.read("calibration_draws", cfg.quantizer.calibration_draws);
        q.finish();
    }
    if (s.has("seeds")) {
        auto sd = s.child("seeds");
        sd.read("field", cfg.seeds.field);
        sd.read("sensors", cfg.seeds.sensors);
        sd.read("phi", cfg.seeds.phi);
        sd.read("noise", cfg.seeds.noise);
        sd.read("calibration", cfg.seeds.calibration);
        sd.read("evaluation", cfg.seeds.evaluation);
        sd.finish();
    }
    s.finish();
}

void parse_solver(Section s, FitOptions& fit) {
    s.read("tol", fit.tol);
    s.read("max_iter", fit.max_iter);
    s.read("dense", fit.dense);
    s.finish();
    if (!(fit.tol > 0.0)) throw ConfigError(s.key_of("tol"), "must be positive");
    if (fit.max_iter < 1) throw ConfigError(s.key_of("max_iter"), "must be at least 1");
}

void parse_estimator(Section s, EstimatorConfig& est) {
    if (s.has("kind")) {
        std::string kind;
        s.read("kind", kind);
        est.kind = estimator_from_string(kind);
    }
    s.read("lambda", est.lambda);
    s.read_list("widths", est.widths);
    s.read("tps_order", est.tps_order);
    s.read("nonnegativity", est.nonnegativity);
    if (s.has("solver")) parse_solver(s.child("solver"), est.fit);
    s.finish();
    if (!(est.lambda > 0.0)) throw ConfigError(s.key_of("lambda"), "must be positive");
    for (std::size_t i = 0; i < est.widths.size(); ++i)
        if (!(est.widths[i] > 0.0)) throw ConfigError(s.key_of("widths") + "[" + std::to_string(i) + "]", "must be positive");
    if (est.tps_order < 1) throw ConfigError(s.key_of("tps_order"), "must be at least 1");
}

void parse_sweep(Section s, SweepSpec& sw) {
    s.read_list("sensors", sw.sensors);
    s.read_list("bits", sw.bits);
    s.read_list("per_sensor", sw.per_sensor);
    std::vector<std::string> names;
    if (s.has("quantizers")) {
        s.read_list("quantizers", names);
        sw.quantizers.clear();
        for (const auto& n : names) sw.quantizers.push_back(quantizer_from_string(n));
    }
    if (s.has("estimators")) {
        s.read_list("estimators", names);
        sw.estimators.clear();
        for (const auto& n : names) sw.estimators.push_back(estimator_from_string(n));
    }
    if (s.has("nonnegativity")) {
        std::vector<bool> flags;
        s.read_list("nonnegativity", flags);
        sw.nonnegativity = flags;
    }
    s.read_list("noise_variances", sw.noise_variances);
    s.read("runs", sw.runs);
    s.read("eval_points", sw.eval_points);
    s.read("master_seed", sw.master_seed);
    s.read("threads", sw.threads);
    s.finish();
}

void parse_online(Section s, OnlineTraceSpec& on) {
    s.read("steps", on.steps);
    s.read("mu", on.mu);
    s.read("lambda", on.lambda);
    s.read_list("widths", on.widths);
    if (s.has("schedule")) {
        std::string name;
        s.read("schedule", name);
        on.schedule = schedule_from_string(name);
    }
    s.read("schedule_seed", on.schedule_seed);
    s.read("comparator_every", on.comparator_every);
    s.read("eval_points", on.eval_points);
    s.finish();
    if (on.steps < 1) throw ConfigError(s.key_of("steps"), "must be at least 1");
    if (!(on.lambda > 0.0)) throw ConfigError(s.key_of("lambda"), "must be positive");
    if (!(on.mu > 0.0)) throw ConfigError(s.key_of("mu"), "must be positive");
    if (!(on.mu * on.lambda < 1.0)) throw ConfigError(s.key_of("mu"), "mu * lambda must be below 1");
    if (on.comparator_every < 1) throw ConfigError(s.key_of("comparator_every"), "must be at least 1");
    if (on.eval_points < 1) throw ConfigError(s.key_of("eval_points"), "must be at least 1");
}

json vector_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json scenario_json(const ScenarioConfig& c) {
    json s;
    s["dim"] = c.dim;
    s["region_lower"] = vector_json(c.lower());
    s["region_upper"] = vector_json(c.upper());
    json tx = json::array();
    for (const auto& t : c.transmitters) tx.push_back({{"power", t.power}, {"position", vector_json(t.position.coords)}});
    s["transmitters"] = tx;
    s["noise_power"] = c.noise_power;
    s["gamma"] = c.gamma;
    s["delta"] = c.delta;
    s["shadowing"] = {{"variance", c.shadow_variance}, {"rho", c.shadow_rho}};
    s["sensors"] = c.sensors;
    s["per_sensor"] = c.per_sensor;
    s["noise_variance"] = c.noise_variance;
    s["quantizer"] = {{"bits", c.quantizer.bits},
                      {"kind", to_string(c.quantizer.kind)},
                      {"clip_prob", c.quantizer.clip_prob},
                      {"calibration_draws", c.quantizer.calibration_draws}};
    s["seeds"] = {{"field", c.seeds.field},   {"sensors", c.seeds.sensors},         {"phi", c.seeds.phi},
                  {"noise", c.seeds.noise}, {"calibration", c.seeds.calibration}, {"evaluation", c.seeds.evaluation}};
    return s;
}

json solver_json(const FitOptions& f) { return {{"tol", f.tol}, {"max_iter", f.max_iter}, {"dense", f.dense}}; }

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line != "\r") out.push_back(line);
    return out;
}

double parse_double(const std::string& s, int line, const std::string& column) {
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw IoError("line " + std::to_string(line) + ", column " + column + ": '" + s + "' is not a number");
    return v;
}

int parse_int(const std::string& s, int line, const std::string& column) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError("line " + std::to_string(line) + ", column " + column + ": '" + s + "' is not an integer");
    return v;
}

/// Counts columns named prefix1, prefix2, ... in order.
int count_prefixed(const std::vector<std::string>& header, std::size_t start, const std::string& prefix) {
    int n = 0;
    while (start + static_cast<std::size_t>(n) < header.size() &&
           header[start + static_cast<std::size_t>(n)] == prefix + std::to_string(n + 1))
        ++n;
    return n;
}

std::string csv_row(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    out += '\n';
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void RunConfig::apply_seed(std::uint64_t master) {
    seed = master;
    scenario.seeds = run_seeds(master, 0);
    sweep.master_seed = master;
    online.schedule_seed = derive_seed(master, 0, static_cast<std::uint64_t>(Stream::Schedule));
}

int RunConfig::grid_per_axis() const {
    if (grid_points > 0) return grid_points;
    return scenario.dim == 1 ? 101 : scenario.dim == 2 ? 41 : 11;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<document>", std::string("not valid JSON: ") + e.what());
    }
    Section root(doc, "");
    if (!root.has("schema_version")) throw ConfigError("schema_version", "missing");
    int version = 0;
    root.read("schema_version", version);
    if (version != kSchemaVersion)
        throw ConfigError("schema_version", "unsupported version " + std::to_string(version) + " (expected " +
                                                std::to_string(kSchemaVersion) + ")");
    RunConfig cfg;
    if (root.has("scenario")) parse_scenario(root.child("scenario"), cfg.scenario);
    cfg.scenario.validate();
    if (root.has("estimator")) parse_estimator(root.child("estimator"), cfg.estimator);
    if (root.has("data")) {
        auto d = root.child("data");
        std::string m, q;
        d.read("measurements", m);
        d.read("quantizer", q);
        d.finish();
        if (!m.empty()) cfg.measurements = base_dir / m;
        if (!q.empty()) cfg.quantizer = base_dir / q;
    }
    if (root.has("evaluation")) {
        auto e = root.child("evaluation");
        e.read("points", cfg.eval_points);
        e.read("grid", cfg.grid_points);
        e.finish();
        if (cfg.eval_points < 1) throw ConfigError("evaluation.points", "must be at least 1");
        if (cfg.grid_points < 0) throw ConfigError("evaluation.grid", "must be nonnegative");
    }
    if (root.has("sweep")) parse_sweep(root.child("sweep"), cfg.sweep);
    if (root.has("online")) parse_online(root.child("online"), cfg.online);
    if (root.has("seed")) {
        std::uint64_t s = 0;
        root.read("seed", s);
        cfg.apply_seed(s);
    }
    root.finish();
    cfg.sweep.base = cfg.scenario;
    cfg.sweep.estimator = cfg.estimator;
    cfg.sweep.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_file(path), path.parent_path());
}

std::string dump_config(const RunConfig& cfg) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    if (cfg.seed) doc["seed"] = *cfg.seed;
    doc["scenario"] = scenario_json(cfg.scenario);
    const auto& e = cfg.estimator;
    doc["estimator"] = {{"kind", to_string(e.kind)},         {"lambda", e.lambda},
                        {"widths", e.widths},                {"tps_order", e.tps_order},
                        {"nonnegativity", e.nonnegativity}, {"solver", solver_json(e.fit)}};
    if (!cfg.measurements.empty() || !cfg.quantizer.empty()) {
        json d;
        if (!cfg.measurements.empty()) d["measurements"] = cfg.measurements.generic_string();
        if (!cfg.quantizer.empty()) d["quantizer"] = cfg.quantizer.generic_string();
        doc["data"] = d;
    }
    doc["evaluation"] = {{"points", cfg.eval_points}, {"grid", cfg.grid_points}};
    const auto& s = cfg.sweep;
    json qs = json::array(), es = json::array(), nn = json::array();
    for (auto q : s.quantizers) qs.push_back(to_string(q));
    for (auto k : s.estimators) es.push_back(to_string(k));
    for (bool b : s.nonnegativity) nn.push_back(b);
    doc["sweep"] = {{"sensors", s.sensors},
                    {"bits", s.bits},
                    {"per_sensor", s.per_sensor},
                    {"quantizers", qs},
                    {"nonnegativity", nn},
                    {"estimators", es},
                    {"noise_variances", s.noise_variances},
                    {"runs", s.runs},
                    {"eval_points", s.eval_points},
                    {"master_seed", s.master_seed},
                    {"threads", s.threads}};
    const auto& o = cfg.online;
    doc["online"] = {{"steps", o.steps},
                     {"mu", o.mu},
                     {"lambda", o.lambda},
                     {"widths", o.widths},
                     {"schedule", to_string(o.schedule)},
                     {"schedule_seed", o.schedule_seed},
                     {"comparator_every", o.comparator_every},
                     {"eval_points", o.eval_points}};
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
    return ss.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("failed writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move output into place at '" + path.string() + "'");
    }
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------

std::string measurements_csv(const std::vector<MeasurementRecord>& records) {
    const int d = records.empty() ? 0 : records.front().location.dim();
    const int m = records.empty() ? 0 : static_cast<int>(records.front().phi.size());
    std::vector<std::string> head{"sensor_index"};
    for (int k = 1; k <= d; ++k) head.push_back("x" + std::to_string(k));
    for (int k = 1; k <= m; ++k) head.push_back("phi" + std::to_string(k));
    for (const char* h : {"q_index", "y", "eps", "raw", "is_virtual"}) head.emplace_back(h);
    std::string out = csv_row(head);
    for (const auto& r : records) {
        if (r.location.dim() != d || r.phi.size() != m)
            throw DimensionError("measurements_csv: records disagree in dimension or channel count");
        std::vector<std::string> row{std::to_string(r.sensor_index)};
        for (int k = 0; k < d; ++k) row.push_back(format_double(r.location.coords(k)));
        for (int k = 0; k < m; ++k) row.push_back(format_double(r.phi(k)));
        row.push_back(r.q_index ? std::to_string(*r.q_index) : "");
        row.push_back(format_double(r.y));
        row.push_back(format_double(r.eps));
        row.push_back(r.raw ? format_double(*r.raw) : "");
        row.push_back(r.is_virtual ? "1" : "0");
        out += csv_row(row);
    }
    return out;
}

std::vector<MeasurementRecord> parse_measurements_csv(const std::string& text) {
    const auto lines = lines_of(text);
    if (lines.empty()) throw IoError("measurements: empty file");
    const auto head = split(lines[0]);
    if (head.empty() || head[0] != "sensor_index") throw IoError("measurements: header must start with sensor_index");
    const int d = count_prefixed(head, 1, "x");
    const int m = count_prefixed(head, 1 + static_cast<std::size_t>(d), "phi");
    const std::vector<std::string> tail{"q_index", "y", "eps", "raw", "is_virtual"};
    if (d < 1 || m < 1 || head.size() != 1 + static_cast<std::size_t>(d + m) + tail.size() ||
        !std::equal(tail.begin(), tail.end(), head.end() - static_cast<long>(tail.size())))
        throw IoError("measurements: expected header sensor_index,x1..xd,phi1..phiM,q_index,y,eps,raw,is_virtual");
    std::vector<MeasurementRecord> out;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const int ln = static_cast<int>(li) + 1;
        const auto f = split(lines[li]);
        if (f.size() != head.size())
            throw IoError("measurements: line " + std::to_string(ln) + " has " + std::to_string(f.size()) +
                          " fields, expected " + std::to_string(head.size()));
        MeasurementRecord r;
        std::size_t c = 0;
        r.sensor_index = parse_int(f[c++], ln, "sensor_index");
        r.location.coords.resize(d);
        for (int k = 0; k < d; ++k) r.location.coords(k) = parse_double(f[c++], ln, "x" + std::to_string(k + 1));
        r.phi.resize(m);
        for (int k = 0; k < m; ++k) r.phi(k) = parse_double(f[c++], ln, "phi" + std::to_string(k + 1));
        if (!f[c].empty()) r.q_index = parse_int(f[c], ln, "q_index");
        ++c;
        r.y = parse_double(f[c++], ln, "y");
        r.eps = parse_double(f[c++], ln, "eps");
        if (!f[c].empty()) r.raw = parse_double(f[c], ln, "raw");
        ++c;
        if (f[c] != "0" && f[c] != "1") throw IoError("measurements: line " + std::to_string(ln) + ", is_virtual must be 0 or 1");
        r.is_virtual = f[c] == "1";
        if (!(r.eps >= 0.0)) throw IoError("measurements: line " + std::to_string(ln) + ", eps must be nonnegative");
        if (r.raw && !r.is_virtual)
            r.clipped = !(r.y - r.eps <= *r.raw && *r.raw < r.y + r.eps);
        out.push_back(std::move(r));
    }
    return out;
}

std::string quantizer_csv(const QuantizerSpec& q) {
    std::string out = "kind,index,boundary\n";
    for (std::size_t i = 0; i < q.boundaries.size(); ++i)
        out += csv_row({to_string(q.kind), std::to_string(i), format_double(q.boundaries[i])});
    return out;
}

QuantizerSpec parse_quantizer_csv(const std::string& text) {
    const auto lines = lines_of(text);
    if (lines.empty() || lines[0] != "kind,index,boundary") throw IoError("quantizer: expected header kind,index,boundary");
    QuantizerSpec q;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const int ln = static_cast<int>(li) + 1;
        const auto f = split(lines[li]);
        if (f.size() != 3) throw IoError("quantizer: line " + std::to_string(ln) + " needs 3 fields");
        QuantizerKind kind;
        try {
            kind = quantizer_from_string(f[0]);
        } catch (const ConfigError&) {
            throw IoError("quantizer: line " + std::to_string(ln) + ", unknown kind '" + f[0] + "'");
        }
        if (li == 1) q.kind = kind;
        else if (kind != q.kind) throw IoError("quantizer: mixed kinds");
        if (parse_int(f[1], ln, "index") != static_cast<int>(li) - 1)
            throw IoError("quantizer: line " + std::to_string(ln) + ", indices must count up from 0");
        q.boundaries.push_back(parse_double(f[2], ln, "boundary"));
    }
    try {
        q.validate();
    } catch (const Error& e) {
        throw IoError(std::string("quantizer: ") + e.what());
    }
    return q;
}

std::string map_grid_csv(const std::vector<Location>& points, const std::vector<Matrix>& values,
                         const std::vector<std::string>& prefixes) {
    if (values.size() != prefixes.size()) throw DimensionError("map_grid_csv: one prefix per value block");
    const int d = points.empty() ? 0 : points.front().dim();
    std::vector<std::string> head;
    for (int k = 1; k <= d; ++k) head.push_back("x" + std::to_string(k));
    for (std::size_t b = 0; b < values.size(); ++b) {
        if (values[b].rows() != static_cast<Eigen::Index>(points.size()))
            throw DimensionError("map_grid_csv: value rows must match the points");
        for (Eigen::Index m = 1; m <= values[b].cols(); ++m) head.push_back(prefixes[b] + std::to_string(m));
    }
    std::string out = csv_row(head);
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::vector<std::string> row;
        for (int k = 0; k < d; ++k) row.push_back(format_double(points[i].coords(k)));
        for (const auto& v : values)
            for (Eigen::Index m = 0; m < v.cols(); ++m) row.push_back(format_double(v(static_cast<Eigen::Index>(i), m)));
        out += csv_row(row);
    }
    return out;
}

std::vector<Location> grid_points(const ScenarioConfig& cfg, int per_axis) {
    if (per_axis < 2) throw ConfigError("evaluation.grid", "needs at least 2 points per axis");
    const Vector lo = cfg.lower(), hi = cfg.upper();
    const int d = cfg.dim;
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(per_axis);
    std::vector<Location> out;
    out.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        Vector c(d);
        std::size_t rest = i;
        // first coordinate varies slowest
        for (int k = d - 1; k >= 0; --k) {
            const auto j = static_cast<double>(rest % static_cast<std::size_t>(per_axis));
            rest /= static_cast<std::size_t>(per_axis);
            c(k) = lo(k) + (hi(k) - lo(k)) * j / (per_axis - 1);
        }
        out.emplace_back(c);
    }
    return out;
}

std::string sweep_csv(const ResultTable& table, bool wall_time) {
    std::vector<std::string> head{"estimator", "quantizer",  "nonnegativity", "noise_variance", "per_sensor",
                                  "bits",      "sensors",    "runs",          "failures",       "nmse_mean",
                                  "nmse_se",   "clip_rate", "error_rate"};
    if (wall_time) head.emplace_back("wall_time");
    std::string out = csv_row(head);
    for (const auto& r : table.rows) {
        const auto& c = r.cell;
        std::vector<std::string> row{to_string(c.estimator),
                                     to_string(c.quantizer),
                                     c.nonnegativity ? "1" : "0",
                                     format_double(c.noise_variance),
                                     std::to_string(c.per_sensor),
                                     std::to_string(c.bits),
                                     std::to_string(c.sensors),
                                     std::to_string(r.nmse_runs.size()),
                                     std::to_string(r.failures),
                                     format_double(r.nmse_mean),
                                     format_double(r.nmse_se),
                                     format_double(r.clip_rate),
                                     format_double(r.error_rate)};
        if (wall_time) row.push_back(format_double(r.wall_time));
        out += csv_row(row);
    }
    return out;
}

std::string sweep_runs_csv(const ResultTable& table) {
    std::string out = "estimator,quantizer,nonnegativity,noise_variance,per_sensor,bits,sensors,run,nmse\n";
    for (const auto& r : table.rows) {
        const auto& c = r.cell;
        for (std::size_t k = 0; k < r.nmse_runs.size(); ++k)
            out += csv_row({to_string(c.estimator), to_string(c.quantizer), c.nonnegativity ? "1" : "0",
                            format_double(c.noise_variance), std::to_string(c.per_sensor), std::to_string(c.bits),
                            std::to_string(c.sensors), std::to_string(k),
                            std::isnan(r.nmse_runs[k]) ? "" : format_double(r.nmse_runs[k])});
    }
    return out;
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
    std::string out =
        "t,cost,running_average,comparator,comparator_exact,envelope,bound,risk,nmse,norm,norm_bound\n";
    for (const auto& r : rows)
        out += csv_row({std::to_string(r.t), format_double(r.cost), format_double(r.running_average),
                        format_double(r.comparator), r.comparator_exact ? "1" : "0", format_double(r.envelope),
                        format_double(r.comparator + r.envelope), format_double(r.risk), format_double(r.nmse),
                        format_double(r.norm), format_double(r.norm_bound)});
    return out;
}

std::string residuals_csv(const std::vector<MeasurementRecord>& records, const MapEstimate& estimate) {
    std::string out = "record,sensor_index,is_virtual,y,eps,fitted,excess\n";
    for (std::size_t j = 0; j < records.size(); ++j) {
        const auto& r = records[j];
        const double f = r.phi.dot(evaluate_map(estimate, r.location));
        const double excess = std::max(0.0, std::abs(r.y - f) - r.eps);
        out += csv_row({std::to_string(j), std::to_string(r.sensor_index), r.is_virtual ? "1" : "0", format_double(r.y),
                        format_double(r.eps), format_double(f), format_double(excess)});
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string estimate_json(const MapEstimate& est) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["channels"] = est.channels;
    doc["lambda"] = est.lambda;
    json k;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DiagonalGaussian>) {
                k = {{"kind", "diagonal-gaussian"}, {"widths", v.widths}};
            } else if constexpr (std::is_same_v<T, TpsCpd>) {
                k = {{"kind", "tps"},
                     {"order", v.order},
                     {"dim", v.dim},
                     {"channels", v.channels},
                     {"argument", v.argument == TpsArgument::Distance ? "distance" : "squared-distance"}};
            } else {
                k = {{"kind", "gaussian"}, {"sigma2", v.sigma2}, {"channels", v.channels}};
            }
        },
        est.kernel.variant());
    doc["kernel"] = k;
    json b;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, NoBasis>) {
                b = {{"kind", "none"}};
            } else if constexpr (std::is_same_v<T, TpsPolynomial>) {
                b = {{"kind", "tps-polynomial"}, {"dim", v.dim}};
            } else {
                json tx = json::array();
                for (const auto& t : v.transmitters) tx.push_back(vector_json(t.coords));
                b = {{"kind", "pathloss"}, {"transmitters", tx}, {"gamma", v.gamma}, {"delta", v.delta}};
            }
        },
        est.basis.variant());
    doc["basis"] = b;
    json anchors = json::array();
    for (const auto& a : est.anchors) anchors.push_back(vector_json(a.coords));
    doc["anchors"] = anchors;
    doc["c"] = vector_json(est.c);
    doc["theta"] = vector_json(est.theta);
    return doc.dump(2) + "\n";
}

MapEstimate parse_estimate_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("estimate: not valid JSON: ") + e.what());
    }
    try {
        Section root(doc, "");
        int version = 0;
        root.read("schema_version", version);
        if (version != kSchemaVersion) throw ConfigError("schema_version", "unsupported version");
        MapEstimate est;
        root.read("channels", est.channels);
        root.read("lambda", est.lambda);
        {
            auto k = root.child("kernel");
            std::string kind;
            k.read("kind", kind);
            if (kind == "diagonal-gaussian") {
                DiagonalGaussian g;
                k.read_list("widths", g.widths);
                est.kernel = KernelSpec(g);
            } else if (kind == "tps") {
                TpsCpd t;
                std::string arg = "distance";
                k.read("order", t.order);
                k.read("dim", t.dim);
                k.read("channels", t.channels);
                k.read("argument", arg);
                t.argument = arg == "squared-distance" ? TpsArgument::SquaredDistance : TpsArgument::Distance;
                est.kernel = KernelSpec(t);
            } else if (kind == "gaussian") {
                ScalarSeparable s;
                k.read("sigma2", s.sigma2);
                k.read("channels", s.channels);
                est.kernel = KernelSpec(s);
            } else {
                throw ConfigError("kernel.kind", "unknown kernel '" + kind + "'");
            }
            k.finish();
        }
        {
            auto b = root.child("basis");
            std::string kind;
            b.read("kind", kind);
            if (kind == "none") {
                est.basis = BasisSpec::none();
            } else if (kind == "tps-polynomial") {
                TpsPolynomial p;
                b.read("dim", p.dim);
                est.basis = BasisSpec(p);
            } else if (kind == "pathloss") {
                TransmitterPathloss p;
                std::vector<std::vector<double>> tx;
                b.read_list("transmitters", tx);
                for (const auto& t : tx)
                    p.transmitters.emplace_back(Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size())));
                b.read("gamma", p.gamma);
                b.read("delta", p.delta);
                est.basis = BasisSpec(p);
            } else {
                throw ConfigError("basis.kind", "unknown basis '" + kind + "'");
            }
            b.finish();
        }
        std::vector<std::vector<double>> anchors;
        root.read_list("anchors", anchors);
        for (const auto& a : anchors)
            est.anchors.emplace_back(Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size())));
        root.read_vector("c", est.c);
        root.read_vector("theta", est.theta);
        root.finish();
        if (est.c.size() != static_cast<Eigen::Index>(est.anchors.size()) * est.channels)
            throw ConfigError("c", "length must be anchors x channels");
        return est;
    } catch (const ConfigError& e) {
        throw IoError(std::string("estimate: ") + e.what());
    }
}

}  // namespace psdmap
