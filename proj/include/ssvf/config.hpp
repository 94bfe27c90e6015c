#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ssvf/grid.hpp"
#include "ssvf/solver.hpp"

namespace ssvf {

/// Documented process exit codes.
enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_config_unreadable = 2,
    exit_missing_key = 3,
    exit_bad_value = 4,
    exit_continuation_stalled = 5,
    exit_evolver_failure = 6,
    exit_verify_failed = 7,
};

struct ConfigError : SsvfError {
    int code;
    ConfigError(const std::string& msg, int exit_code) : SsvfError(msg), code(exit_code) {}
};

// ---------------------------------------------------------------------------
// Sectioned key-value text
// ---------------------------------------------------------------------------

/// Minimal INI document: [section] headers, `key = value` lines, full-line
/// comments starting with '#' or ';'. Keys remember their line for messages.
struct IniDoc {
    struct Entry {
        std::string key;
        std::string value;
        int line = 0;
    };
    struct Section {
        std::string name;
        std::vector<Entry> entries;
    };
    std::vector<Section> sections;

    static IniDoc parse(const std::string& text) {
        IniDoc doc;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        Section* cur = nullptr;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError("unterminated section header at line " +
                                          std::to_string(lineno),
                                      exit_bad_value);
                doc.sections.push_back({trim(t.substr(1, t.size() - 2)), {}});
                cur = &doc.sections.back();
                continue;
            }
            const std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("expected `key = value` at line " + std::to_string(lineno),
                                  exit_bad_value);
            if (!cur)
                throw ConfigError("key outside any section at line " + std::to_string(lineno),
                                  exit_bad_value);
            cur->entries.push_back(
                {trim(t.substr(0, eq)), trim(t.substr(eq + 1)), lineno});
        }
        return doc;
    }

    const Entry* find(const std::string& section, const std::string& key) const {
        for (const auto& s : sections)
            if (s.name == section)
                for (const auto& e : s.entries)
                    if (e.key == key) return &e;
        return nullptr;
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        for (auto& s : sections)
            if (s.name == section) {
                for (auto& e : s.entries)
                    if (e.key == key) {
                        e.value = value;
                        return;
                    }
                s.entries.push_back({key, value, 0});
                return;
            }
        sections.push_back({section, {{key, value, 0}}});
    }

    static std::string trim(const std::string& s) {
        std::size_t b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        std::size_t e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct DatumConfig {
    std::string family;        // curl_poles | u_only | tabulated
    double amplitude = 0.01;   // trace sup normalization
    std::string trace_file;    // tabulated family only
};

struct EvolveWindow {
    double t0 = 1.0;
    double t1 = 2.0;
    double dt = 0.02;
    int record_every = 1;
    bool monitor = true;
};

struct RunSettings {
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    int workers = 1;
};

struct RunConfig {
    DatumConfig datum;
    GridSpec grid {64, 16.0, -1.0};
    double gamma = 0.5;
    SolveConfig solve;  // damping 0 means automatic (resolved by the pipeline)
    EvolveWindow evolve;
    RunSettings run;
    std::vector<std::string> warnings;

    /// Picard mixing weight after the automatic rule: large data is damped.
    double resolved_damping() const {
        if (solve.damping > 0.0) return solve.damping;
        return datum.amplitude > 0.2 ? 0.5 : 1.0;
    }

    std::string canonical() const;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct KeyReader {
    const IniDoc& doc;
    std::string section;

    std::string context(const std::string& key, const IniDoc::Entry* e) const {
        std::string c = section + "." + key;
        if (e && e->line > 0) c += " at line " + std::to_string(e->line);
        return c;
    }

    bool has(const std::string& key) const { return doc.find(section, key) != nullptr; }

    std::string str(const std::string& key, const std::string& fallback) const {
        const auto* e = doc.find(section, key);
        return e ? e->value : fallback;
    }

    double num(const std::string& key, double fallback) const {
        const auto* e = doc.find(section, key);
        if (!e) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(e->value, &pos);
            if (pos != e->value.size()) throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("bad numeric value for " + context(key, e) + ": '" + e->value +
                                  "'",
                              exit_bad_value);
        }
    }

    long integer(const std::string& key, long fallback) const {
        const auto* e = doc.find(section, key);
        if (!e) return fallback;
        try {
            std::size_t pos = 0;
            const long v = std::stol(e->value, &pos);
            if (pos != e->value.size()) throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("bad integer value for " + context(key, e) + ": '" + e->value +
                                  "'",
                              exit_bad_value);
        }
    }

    bool flag(const std::string& key, bool fallback) const {
        const auto* e = doc.find(section, key);
        if (!e) return fallback;
        const std::string& v = e->value;
        if (v == "true" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "no" || v == "0") return false;
        throw ConfigError("bad boolean value for " + context(key, e) + ": '" + v + "'",
                          exit_bad_value);
    }

    std::vector<double> num_list(const std::string& key,
                                 const std::vector<double>& fallback) const {
        const auto* e = doc.find(section, key);
        if (!e) return fallback;
        std::vector<double> out;
        std::istringstream is(e->value);
        std::string item;
        while (std::getline(is, item, ',')) {
            item = IniDoc::trim(item);
            if (item.empty()) continue;
            try {
                std::size_t pos = 0;
                out.push_back(std::stod(item, &pos));
                if (pos != item.size()) throw std::invalid_argument("trailing characters");
            } catch (const std::exception&) {
                throw ConfigError("bad list value for " + context(key, e) + ": '" + item + "'",
                                  exit_bad_value);
            }
        }
        if (out.empty())
            throw ConfigError("empty list for " + context(key, e), exit_bad_value);
        return out;
    }
};

/// Known keys, used both to reject typos and to apply environment overrides
/// of the form SSVF_<SECTION>_<KEY>.
inline const std::vector<std::pair<std::string, std::string>>& known_keys() {
    static const std::vector<std::pair<std::string, std::string>> keys = {
        {"datum", "family"},         {"datum", "amplitude"},
        {"datum", "trace_file"},     {"grid", "n"},
        {"grid", "half_width"},      {"grid", "mask_radius"},
        {"profile", "gamma"},        {"solve", "sigma_schedule"},
        {"solve", "damping"},        {"solve", "tol"},
        {"solve", "max_iters"},      {"solve", "anderson_depth"},
        {"solve", "norm_ceiling"},   {"solve", "divergence_factor"},
        {"solve", "duhamel_nodes"},  {"solve", "validate_quadrature"},
        {"evolve", "t0"},            {"evolve", "t1"},
        {"evolve", "dt"},            {"evolve", "record_every"},
        {"evolve", "monitor"},       {"run", "out_dir"},
        {"run", "seed"},             {"run", "workers"},
    };
    return keys;
}

inline std::string env_name(const std::string& section, const std::string& key) {
    std::string name = "SSVF_" + section + "_" + key;
    for (char& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

}  // namespace detail

/// Environment variables SSVF_<SECTION>_<KEY> override file values.
inline void apply_env_overrides(IniDoc& doc) {
    for (const auto& [section, key] : detail::known_keys()) {
        const char* v = std::getenv(detail::env_name(section, key).c_str());
        if (v) doc.set(section, key, v);
    }
}

inline RunConfig run_config_from_doc(const IniDoc& doc) {
    for (const auto& s : doc.sections)
        for (const auto& e : s.entries) {
            bool known = false;
            for (const auto& [sec, key] : detail::known_keys())
                if (sec == s.name && key == e.key) {
                    known = true;
                    break;
                }
            if (!known)
                throw ConfigError("unknown key " + s.name + "." + e.key +
                                      (e.line > 0 ? " at line " + std::to_string(e.line) : ""),
                                  exit_bad_value);
        }

    RunConfig cfg;
    detail::KeyReader datum {doc, "datum"};
    detail::KeyReader grid {doc, "grid"};
    detail::KeyReader profile {doc, "profile"};
    detail::KeyReader solve {doc, "solve"};
    detail::KeyReader evolve {doc, "evolve"};
    detail::KeyReader run {doc, "run"};

    if (!datum.has("family"))
        throw ConfigError("missing required key datum.family", exit_missing_key);
    cfg.datum.family = datum.str("family", "");
    if (cfg.datum.family != "curl_poles" && cfg.datum.family != "u_only" &&
        cfg.datum.family != "tabulated")
        throw ConfigError("bad value for datum.family: '" + cfg.datum.family +
                              "' (expected curl_poles, u_only, or tabulated)",
                          exit_bad_value);
    cfg.datum.amplitude = datum.num("amplitude", 0.01);
    if (!(cfg.datum.amplitude > 0.0))
        throw ConfigError("datum.amplitude must be positive", exit_bad_value);
    cfg.datum.trace_file = datum.str("trace_file", "");
    if (cfg.datum.family == "tabulated" && cfg.datum.trace_file.empty())
        throw ConfigError("missing required key datum.trace_file for the tabulated family",
                          exit_missing_key);

    cfg.grid.n = static_cast<int>(grid.integer("n", 64));
    cfg.grid.half_width = grid.num("half_width", 16.0);
    cfg.grid.mask_radius = grid.num("mask_radius", -1.0);
    try {
        cfg.grid.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("bad grid: ") + e.what(), exit_bad_value);
    }
    if ((cfg.grid.n & (cfg.grid.n - 1)) != 0)
        cfg.warnings.push_back("grid.n = " + std::to_string(cfg.grid.n) +
                               " is not a power of two; transforms will be slow");

    cfg.gamma = profile.num("gamma", 0.5);
    if (!(cfg.gamma > 0.0) || cfg.gamma > 1.0)
        throw ConfigError("gamma must lie in (0,1]", exit_bad_value);

    cfg.solve.sigma_schedule = solve.num_list("sigma_schedule", {0.0, 0.25, 0.5, 0.75, 1.0});
    cfg.solve.damping = solve.num("damping", 1.0);
    if (cfg.solve.damping < 0.0 || cfg.solve.damping > 1.0)
        throw ConfigError("solve.damping must lie in [0,1] (0 selects the automatic rule)",
                          exit_bad_value);
    cfg.solve.tol_fixed_point = solve.num("tol", 1e-8);
    cfg.solve.max_iters = static_cast<int>(solve.integer("max_iters", 40));
    cfg.solve.anderson_depth = static_cast<int>(solve.integer("anderson_depth", 0));
    cfg.solve.norm_ceiling = solve.num("norm_ceiling", 50.0);
    cfg.solve.divergence_factor = solve.num("divergence_factor", 10.0);
    cfg.solve.duhamel_nodes = static_cast<int>(solve.integer("duhamel_nodes", 64));
    cfg.solve.validate_quadrature = solve.flag("validate_quadrature", false);

    cfg.evolve.t0 = evolve.num("t0", 1.0);
    cfg.evolve.t1 = evolve.num("t1", 2.0);
    cfg.evolve.dt = evolve.num("dt", 0.02);
    cfg.evolve.record_every = static_cast<int>(evolve.integer("record_every", 1));
    cfg.evolve.monitor = evolve.flag("monitor", true);
    if (!(cfg.evolve.t0 > 0.0) || !(cfg.evolve.t1 > cfg.evolve.t0))
        throw ConfigError("evolve window must satisfy t1 > t0 > 0", exit_bad_value);
    if (!(cfg.evolve.dt > 0.0))
        throw ConfigError("evolve.dt must be positive", exit_bad_value);
    if (cfg.evolve.record_every < 1)
        throw ConfigError("evolve.record_every must be at least 1", exit_bad_value);

    cfg.run.out_dir = run.str("out_dir", "out");
    const long seed = run.integer("seed", 0);
    if (seed < 0) throw ConfigError("run.seed must be nonnegative", exit_bad_value);
    cfg.run.seed = static_cast<std::uint64_t>(seed);
    cfg.run.workers = static_cast<int>(run.integer("workers", 1));
    if (cfg.run.workers < 1)
        throw ConfigError("run.workers must be at least 1", exit_bad_value);
    cfg.solve.workers = cfg.run.workers;

    // Everything except damping = 0 (the automatic sentinel) is validated by
    // the solver's own checks.
    SolveConfig probe = cfg.solve;
    probe.damping = cfg.resolved_damping();
    try {
        probe.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("bad solve settings: ") + e.what(), exit_bad_value);
    }
    return cfg;
}

inline RunConfig parse_run_config_text(const std::string& text, bool env_overrides = true) {
    IniDoc doc = IniDoc::parse(text);
    if (env_overrides) apply_env_overrides(doc);
    return run_config_from_doc(doc);
}

inline RunConfig parse_run_config(const std::string& path, bool env_overrides = true) {
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot read config file: " + path, exit_config_unreadable);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_run_config_text(buf.str(), env_overrides);
}

/// Canonical emission: fixed section and key order, defaults materialized,
/// full double precision. parse(canonical()) reproduces the config.
inline std::string RunConfig::canonical() const {
    using detail::fmt_double;
    std::ostringstream os;
    os << "[datum]\n";
    os << "family = " << datum.family << "\n";
    os << "amplitude = " << fmt_double(datum.amplitude) << "\n";
    if (!datum.trace_file.empty()) os << "trace_file = " << datum.trace_file << "\n";
    os << "\n[grid]\n";
    os << "n = " << grid.n << "\n";
    os << "half_width = " << fmt_double(grid.half_width) << "\n";
    os << "mask_radius = " << fmt_double(grid.mask_radius) << "\n";
    os << "\n[profile]\n";
    os << "gamma = " << fmt_double(gamma) << "\n";
    os << "\n[solve]\n";
    os << "sigma_schedule = ";
    for (std::size_t i = 0; i < solve.sigma_schedule.size(); ++i)
        os << (i ? "," : "") << fmt_double(solve.sigma_schedule[i]);
    os << "\n";
    os << "damping = " << fmt_double(solve.damping) << "\n";
    os << "tol = " << fmt_double(solve.tol_fixed_point) << "\n";
    os << "max_iters = " << solve.max_iters << "\n";
    os << "anderson_depth = " << solve.anderson_depth << "\n";
    os << "norm_ceiling = " << fmt_double(solve.norm_ceiling) << "\n";
    os << "divergence_factor = " << fmt_double(solve.divergence_factor) << "\n";
    os << "duhamel_nodes = " << solve.duhamel_nodes << "\n";
    os << "validate_quadrature = " << (solve.validate_quadrature ? "true" : "false") << "\n";
    os << "\n[evolve]\n";
    os << "t0 = " << fmt_double(evolve.t0) << "\n";
    os << "t1 = " << fmt_double(evolve.t1) << "\n";
    os << "dt = " << fmt_double(evolve.dt) << "\n";
    os << "record_every = " << evolve.record_every << "\n";
    os << "monitor = " << (evolve.monitor ? "true" : "false") << "\n";
    os << "\n[run]\n";
    os << "out_dir = " << run.out_dir << "\n";
    os << "seed = " << run.seed << "\n";
    os << "workers = " << run.workers << "\n";
    return os.str();
}

}  // namespace ssvf
