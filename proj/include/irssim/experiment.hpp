#ifndef IRSSIM_EXPERIMENT_HPP
#define IRSSIM_EXPERIMENT_HPP

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "irssim/sim_engine.hpp"

namespace irssim {

// A runnable experiment: one scenario, a scheme list, an optional parameter
// sweep, and Monte Carlo sizing. Loaded from a line-based key = value file
// with a [scenario] section; unknown keys are rejected with line numbers.
struct ExperimentSpec {
    std::string name = "experiment";
    int runs = 1;
    int workers = 1;  // 0 picks the hardware thread count
    std::vector<Scheme> schemes = {Scheme::proposed, Scheme::upper_bound,
                                   Scheme::benchmark_first_block_full, Scheme::benchmark_offline_g,
                                   Scheme::no_irs};
    std::string sweep = "none";
    std::vector<double> sweep_values;
    bool trace = false;
    ScenarioConfig scenario;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

[[noreturn]] inline void parse_fail(int line, const std::string& what) {
    throw config_error("line " + std::to_string(line) + ": " + what);
}

inline double parse_double(const std::string& v, int line) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) parse_fail(line, "trailing characters in number '" + v + "'");
        return d;
    } catch (const std::logic_error&) {
        parse_fail(line, "expected a number, got '" + v + "'");
    }
}

inline long long parse_int(const std::string& v, int line) {
    try {
        std::size_t used = 0;
        long long i = std::stoll(v, &used);
        if (used != v.size()) parse_fail(line, "trailing characters in integer '" + v + "'");
        return i;
    } catch (const std::logic_error&) {
        parse_fail(line, "expected an integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    parse_fail(line, "expected true/false, got '" + v + "'");
}

inline Vec3 parse_vec3(const std::string& v, int line) {
    auto parts = split_list(v);
    if (parts.size() != 3) parse_fail(line, "expected three comma-separated numbers");
    return {parse_double(parts[0], line), parse_double(parts[1], line),
            parse_double(parts[2], line)};
}

// Shortest exact representation, so serialize + parse is the identity.
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::string best;
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) != v) continue;
        if (best.empty() || std::strlen(buf) < best.size()) best = buf;
    }
    if (best.empty()) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        best = buf;
    }
    return best;
}

inline std::string fmt_vec3(const Vec3& v) {
    return fmt_double(v.x) + "," + fmt_double(v.y) + "," + fmt_double(v.z);
}

}  // namespace detail

inline Scheme scheme_from_name(const std::string& name) {
    if (name == "proposed") return Scheme::proposed;
    if (name == "upper_bound") return Scheme::upper_bound;
    if (name == "benchmark_first_block_full") return Scheme::benchmark_first_block_full;
    if (name == "benchmark_offline_g") return Scheme::benchmark_offline_g;
    if (name == "no_irs") return Scheme::no_irs;
    throw config_error("unknown scheme '" + name + "'");
}

inline const std::vector<std::string>& sweep_keys() {
    static const std::vector<std::string> keys = {
        "none", "tau",        "m", "d_irs", "vehicle_speed", "feedback_delay_blocks",
        "n0",   "transmit_power_dbm"};
    return keys;
}

inline void apply_sweep(ScenarioConfig& cfg, const std::string& key, double value) {
    auto as_int = [&](const char* what) {
        double r = std::round(value);
        if (std::abs(value - r) > 1e-9) throw config_error(std::string(what) + " must be an integer");
        return static_cast<int>(r);
    };
    if (key == "none") return;
    if (key == "tau") {
        cfg.tau = as_int("tau");
    } else if (key == "m") {
        int m = as_int("m");
        int side = static_cast<int>(std::round(std::sqrt(static_cast<double>(m))));
        if (side * side != m) throw config_error("m sweep values must be perfect squares");
        cfg.m_x = cfg.m_y = side;
    } else if (key == "d_irs") {
        cfg.d_irs = value;
    } else if (key == "vehicle_speed") {
        cfg.vehicle_speed = value;
    } else if (key == "feedback_delay_blocks") {
        cfg.feedback_delay_blocks = as_int("feedback_delay_blocks");
    } else if (key == "n0") {
        cfg.n0 = as_int("n0");
    } else if (key == "transmit_power_dbm") {
        cfg.transmit_power_dbm = value;
    } else {
        throw config_error("unknown sweep parameter '" + key + "'");
    }
}

inline void apply_scenario_key(ScenarioConfig& c, const std::string& key, const std::string& value,
                               int line) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;
    using detail::parse_vec3;
    if (key == "carrier_frequency") c.carrier_frequency = parse_double(value, line);
    else if (key == "bandwidth") c.bandwidth = parse_double(value, line);
    else if (key == "vehicle_speed") c.vehicle_speed = parse_double(value, line);
    else if (key == "block_duration") c.block_duration = parse_double(value, line);
    else if (key == "n_b") c.n_b = static_cast<int>(parse_int(value, line));
    else if (key == "m_x") c.m_x = static_cast<int>(parse_int(value, line));
    else if (key == "m_y") c.m_y = static_cast<int>(parse_int(value, line));
    else if (key == "spacing_ratio") c.spacing_ratio = parse_double(value, line);
    else if (key == "d_irs") c.d_irs = parse_double(value, line);
    else if (key == "tau") c.tau = static_cast<int>(parse_int(value, line));
    else if (key == "n0") c.n0 = static_cast<int>(parse_int(value, line));
    else if (key == "transmit_power_dbm") c.transmit_power_dbm = parse_double(value, line);
    else if (key == "controller_power_dbm") c.controller_power_dbm = parse_double(value, line);
    else if (key == "noise_dbm") c.noise_dbm = parse_double(value, line);
    else if (key == "gap_db") c.gap_db = parse_double(value, line);
    else if (key == "beta0_db") c.beta0_db = parse_double(value, line);
    else if (key == "pl_exp_irs_bs") c.pl_exp_irs_bs = parse_double(value, line);
    else if (key == "pl_exp_user_bs") c.pl_exp_user_bs = parse_double(value, line);
    else if (key == "pl_exp_user_irs") c.pl_exp_user_irs = parse_double(value, line);
    else if (key == "pl_exp_user_c1") c.pl_exp_user_c1 = parse_double(value, line);
    else if (key == "bs_position") c.bs_position = parse_vec3(value, line);
    else if (key == "c1_position") c.c1_position = parse_vec3(value, line);
    else if (key == "controller_cross_distance") c.controller_cross_distance = parse_double(value, line);
    else if (key == "user_y") c.user_y = parse_double(value, line);
    else if (key == "user_z") c.user_z = parse_double(value, line);
    else if (key == "user_start_x")
        c.user_start_x = value == "auto" ? std::numeric_limits<double>::quiet_NaN()
                                         : parse_double(value, line);
    else if (key == "n_paths") c.n_paths = static_cast<int>(parse_int(value, line));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(value, line));
    else if (key == "feedback_delay_blocks")
        c.feedback_delay_blocks = static_cast<int>(parse_int(value, line));
    else if (key == "perfect_offline") c.perfect_offline = parse_bool(value, line);
    else if (key == "upper_bound_zero_overhead") c.upper_bound_zero_overhead = parse_bool(value, line);
    else if (key == "disable_irs") c.disable_irs = parse_bool(value, line);
    else if (key == "disable_direct") c.disable_direct = parse_bool(value, line);
    else detail::parse_fail(line, "unknown scenario key '" + key + "'");
}

inline ExperimentSpec parse_experiment(const std::string& text) {
    ExperimentSpec spec;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = detail::trim(raw);
        if (s.empty() || s[0] == '#') continue;
        if (s.front() == '[') {
            if (s.back() != ']') detail::parse_fail(line, "unterminated section header");
            section = detail::trim(s.substr(1, s.size() - 2));
            if (section != "scenario") detail::parse_fail(line, "unknown section '" + section + "'");
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) detail::parse_fail(line, "expected key = value");
        std::string key = detail::trim(s.substr(0, eq));
        std::string value = detail::trim(s.substr(eq + 1));
        if (key.empty()) detail::parse_fail(line, "empty key");

        if (section == "scenario") {
            apply_scenario_key(spec.scenario, key, value, line);
            continue;
        }
        if (key == "name") {
            spec.name = value;
        } else if (key == "runs") {
            spec.runs = static_cast<int>(detail::parse_int(value, line));
        } else if (key == "workers") {
            spec.workers = static_cast<int>(detail::parse_int(value, line));
        } else if (key == "schemes") {
            spec.schemes.clear();
            for (const auto& tok : detail::split_list(value)) {
                try {
                    spec.schemes.push_back(scheme_from_name(tok));
                } catch (const config_error& e) {
                    detail::parse_fail(line, e.what());
                }
            }
            if (spec.schemes.empty()) detail::parse_fail(line, "empty scheme list");
        } else if (key == "sweep") {
            bool known = false;
            for (const auto& k : sweep_keys()) known = known || k == value;
            if (!known) detail::parse_fail(line, "unknown sweep parameter '" + value + "'");
            spec.sweep = value;
        } else if (key == "sweep_values") {
            spec.sweep_values.clear();
            for (const auto& tok : detail::split_list(value))
                spec.sweep_values.push_back(detail::parse_double(tok, line));
        } else if (key == "trace") {
            spec.trace = detail::parse_bool(value, line);
        } else {
            detail::parse_fail(line, "unknown key '" + key + "'");
        }
    }
    if (spec.runs < 1) throw config_error("runs must be at least 1");
    if (spec.workers < 0) throw config_error("workers must be nonnegative");
    if (spec.sweep != "none" && spec.sweep_values.empty())
        throw config_error("sweep set but sweep_values empty");
    if (spec.sweep == "none" && !spec.sweep_values.empty())
        throw config_error("sweep_values given without a sweep parameter");
    return spec;
}

inline ExperimentSpec load_experiment_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("could not open experiment file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment(ss.str());
}

inline std::string serialize_experiment(const ExperimentSpec& spec) {
    using detail::fmt_double;
    std::string out;
    out += "name = " + spec.name + "\n";
    out += "runs = " + std::to_string(spec.runs) + "\n";
    out += "workers = " + std::to_string(spec.workers) + "\n";
    out += "schemes = ";
    for (std::size_t i = 0; i < spec.schemes.size(); ++i)
        out += std::string(i ? "," : "") + scheme_name(spec.schemes[i]);
    out += "\n";
    out += "sweep = " + spec.sweep + "\n";
    if (!spec.sweep_values.empty()) {
        out += "sweep_values = ";
        for (std::size_t i = 0; i < spec.sweep_values.size(); ++i)
            out += std::string(i ? "," : "") + fmt_double(spec.sweep_values[i]);
        out += "\n";
    }
    out += std::string("trace = ") + (spec.trace ? "true" : "false") + "\n";

    const ScenarioConfig& c = spec.scenario;
    out += "\n[scenario]\n";
    out += "carrier_frequency = " + fmt_double(c.carrier_frequency) + "\n";
    out += "bandwidth = " + fmt_double(c.bandwidth) + "\n";
    out += "vehicle_speed = " + fmt_double(c.vehicle_speed) + "\n";
    out += "block_duration = " + fmt_double(c.block_duration) + "\n";
    out += "n_b = " + std::to_string(c.n_b) + "\n";
    out += "m_x = " + std::to_string(c.m_x) + "\n";
    out += "m_y = " + std::to_string(c.m_y) + "\n";
    out += "spacing_ratio = " + fmt_double(c.spacing_ratio) + "\n";
    out += "d_irs = " + fmt_double(c.d_irs) + "\n";
    out += "tau = " + std::to_string(c.tau) + "\n";
    out += "n0 = " + std::to_string(c.n0) + "\n";
    out += "transmit_power_dbm = " + fmt_double(c.transmit_power_dbm) + "\n";
    out += "controller_power_dbm = " + fmt_double(c.controller_power_dbm) + "\n";
    out += "noise_dbm = " + fmt_double(c.noise_dbm) + "\n";
    out += "gap_db = " + fmt_double(c.gap_db) + "\n";
    out += "beta0_db = " + fmt_double(c.beta0_db) + "\n";
    out += "pl_exp_irs_bs = " + fmt_double(c.pl_exp_irs_bs) + "\n";
    out += "pl_exp_user_bs = " + fmt_double(c.pl_exp_user_bs) + "\n";
    out += "pl_exp_user_irs = " + fmt_double(c.pl_exp_user_irs) + "\n";
    out += "pl_exp_user_c1 = " + fmt_double(c.pl_exp_user_c1) + "\n";
    out += "bs_position = " + detail::fmt_vec3(c.bs_position) + "\n";
    out += "c1_position = " + detail::fmt_vec3(c.c1_position) + "\n";
    out += "controller_cross_distance = " + fmt_double(c.controller_cross_distance) + "\n";
    out += "user_y = " + fmt_double(c.user_y) + "\n";
    out += "user_z = " + fmt_double(c.user_z) + "\n";
    out += "user_start_x = " +
           (std::isnan(c.user_start_x) ? std::string("auto") : fmt_double(c.user_start_x)) + "\n";
    out += "n_paths = " + std::to_string(c.n_paths) + "\n";
    out += "seed = " + std::to_string(c.seed) + "\n";
    out += "feedback_delay_blocks = " + std::to_string(c.feedback_delay_blocks) + "\n";
    out += std::string("perfect_offline = ") + (c.perfect_offline ? "true" : "false") + "\n";
    out += std::string("upper_bound_zero_overhead = ") +
           (c.upper_bound_zero_overhead ? "true" : "false") + "\n";
    out += std::string("disable_irs = ") + (c.disable_irs ? "true" : "false") + "\n";
    out += std::string("disable_direct = ") + (c.disable_direct ? "true" : "false") + "\n";
    return out;
}

struct SweepPointResult {
    double sweep_value = 0.0;
    MonteCarloResult mc;
};

inline std::vector<SweepPointResult> compute_experiment(const ExperimentSpec& spec) {
    int workers = spec.workers;
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    std::vector<double> values = spec.sweep_values;
    if (spec.sweep == "none") values = {0.0};

    std::vector<SweepPointResult> points;
    for (double v : values) {
        ScenarioConfig cfg = spec.scenario;
        apply_sweep(cfg, spec.sweep, v);
        cfg.validate();
        SweepPointResult p;
        p.sweep_value = v;
        p.mc = monte_carlo(cfg, spec.runs, spec.schemes, workers);
        points.push_back(std::move(p));
    }
    return points;
}

namespace detail {

// Fixed-precision cell formatting so outputs are byte-stable across runs
// and worker counts.
inline std::string fmt_csv(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
}

}  // namespace detail

inline std::string experiment_csv(const ExperimentSpec& spec,
                                  const std::vector<SweepPointResult>& points) {
    std::string out =
        "sweep_param,sweep_value,scheme,mean_rate_bps_hz,std_rate,mean_gamma_db,angle_rmse,runs\n";
    for (const auto& p : points) {
        for (const auto& cell : p.mc.cells) {
            out += spec.sweep + "," + detail::fmt_csv(p.sweep_value) + "," +
                   scheme_name(cell.scheme) + "," + detail::fmt_csv(cell.mean_rate) + "," +
                   detail::fmt_csv(cell.std_rate) + "," +
                   detail::fmt_csv(linear_to_db(cell.mean_gamma)) + "," +
                   detail::fmt_csv(cell.angle_rmse) + "," + std::to_string(p.mc.n_runs) + "\n";
        }
    }
    return out;
}

inline nlohmann::ordered_json scenario_to_json(const ScenarioConfig& c) {
    nlohmann::ordered_json j;
    j["carrier_frequency"] = c.carrier_frequency;
    j["bandwidth"] = c.bandwidth;
    j["vehicle_speed"] = c.vehicle_speed;
    j["block_duration"] = c.block_duration;
    j["n_b"] = c.n_b;
    j["m_x"] = c.m_x;
    j["m_y"] = c.m_y;
    j["spacing_ratio"] = c.spacing_ratio;
    j["d_irs"] = c.d_irs;
    j["tau"] = c.tau;
    j["n0"] = c.n0;
    j["transmit_power_dbm"] = c.transmit_power_dbm;
    j["controller_power_dbm"] = c.controller_power_dbm;
    j["noise_dbm"] = c.noise_dbm;
    j["gap_db"] = c.gap_db;
    j["beta0_db"] = c.beta0_db;
    j["pl_exp_irs_bs"] = c.pl_exp_irs_bs;
    j["pl_exp_user_bs"] = c.pl_exp_user_bs;
    j["pl_exp_user_irs"] = c.pl_exp_user_irs;
    j["pl_exp_user_c1"] = c.pl_exp_user_c1;
    j["bs_position"] = {c.bs_position.x, c.bs_position.y, c.bs_position.z};
    j["c1_position"] = {c.c1_position.x, c.c1_position.y, c.c1_position.z};
    j["controller_cross_distance"] = c.controller_cross_distance;
    j["user_y"] = c.user_y;
    j["user_z"] = c.user_z;
    if (std::isnan(c.user_start_x))
        j["user_start_x"] = "auto";
    else
        j["user_start_x"] = c.user_start_x;
    j["n_paths"] = c.n_paths;
    j["seed"] = c.seed;
    j["feedback_delay_blocks"] = c.feedback_delay_blocks;
    j["perfect_offline"] = c.perfect_offline;
    j["upper_bound_zero_overhead"] = c.upper_bound_zero_overhead;
    j["disable_irs"] = c.disable_irs;
    j["disable_direct"] = c.disable_direct;
    return j;
}

inline nlohmann::ordered_json experiment_json(const ExperimentSpec& spec,
                                              const std::vector<SweepPointResult>& points) {
    nlohmann::ordered_json j;
    j["name"] = spec.name;
    j["runs"] = spec.runs;
    std::vector<std::string> names;
    for (Scheme s : spec.schemes) names.push_back(scheme_name(s));
    j["schemes"] = names;
    j["sweep"] = spec.sweep;
    j["sweep_values"] = spec.sweep_values;
    j["scenario"] = scenario_to_json(spec.scenario);
    nlohmann::ordered_json results = nlohmann::ordered_json::array();
    for (const auto& p : points) {
        nlohmann::ordered_json point;
        point["sweep_value"] = p.sweep_value;
        nlohmann::ordered_json cells = nlohmann::ordered_json::array();
        for (const auto& cell : p.mc.cells) {
            nlohmann::ordered_json c;
            c["scheme"] = scheme_name(cell.scheme);
            c["feedback_delay_blocks"] = cell.delta;
            c["mean_rate_bps_hz"] = cell.mean_rate;
            c["std_rate"] = cell.std_rate;
            c["mean_gamma_db"] = linear_to_db(cell.mean_gamma);
            c["angle_rmse"] = cell.angle_rmse;
            c["degraded_runs"] = cell.degraded_runs;
            c["forced_triggers"] = cell.forced_triggers;
            if (spec.trace) {
                c["run_mean_rates"] = cell.run_mean_rates;
                c["mean_rate_per_block"] = cell.mean_rate_per_block;
            }
            cells.push_back(std::move(c));
        }
        point["cells"] = std::move(cells);
        results.push_back(std::move(point));
    }
    j["results"] = std::move(results);
    return j;
}

struct ExperimentOutput {
    std::string csv_path;
    std::string json_path;
};

// Runs the whole experiment and writes the CSV plus a JSON sidecar next to
// it. Output bytes depend only on the experiment itself, never on the worker
// count.
inline ExperimentOutput run_experiment(const ExperimentSpec& spec, const std::string& csv_path) {
    auto points = compute_experiment(spec);

    ExperimentOutput out;
    out.csv_path = csv_path;
    out.json_path = csv_path;
    if (out.json_path.size() >= 4 && out.json_path.substr(out.json_path.size() - 4) == ".csv")
        out.json_path = out.json_path.substr(0, out.json_path.size() - 4);
    out.json_path += ".json";

    std::ofstream csv(out.csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("could not write '" + out.csv_path + "'");
    csv << experiment_csv(spec, points);
    csv.close();

    std::ofstream js(out.json_path, std::ios::binary);
    if (!js) throw std::runtime_error("could not write '" + out.json_path + "'");
    js << experiment_json(spec, points).dump(2) << "\n";
    js.close();
    return out;
}

}  // namespace irssim

#endif
