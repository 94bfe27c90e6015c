/// @file test_io.cpp
/// @brief Container formats, CSV emission, manifests, config parsing with
/// environment overrides, trace-file round-trips, and the pipeline
/// subcommands end to end on small grids (artifact completeness, exit codes,
/// byte determinism across repeated runs).

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ssvf/config.hpp"
#include "ssvf/datum.hpp"
#include "ssvf/io.hpp"
#include "ssvf/pipeline.hpp"

using namespace ssvf;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;
using Catch::Matchers::StartsWith;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "ssvf_io_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return lines;
}

std::vector<double> parse_csv_row(const std::string& line) {
    std::vector<double> out;
    std::istringstream is(line);
    std::string cell;
    while (std::getline(is, cell, ',')) {
        std::size_t pos = 0;
        out.push_back(std::stod(cell, &pos));
        REQUIRE(pos == cell.size());
    }
    return out;
}

/// Small config used by every pipeline run; only out_dir varies.
RunConfig tiny_config(const fs::path& out) {
    RunConfig cfg;
    cfg.datum.family = "curl_poles";
    cfg.datum.amplitude = 0.01;
    cfg.grid = GridSpec {32, 16.0, -1.0};
    cfg.gamma = 0.5;
    cfg.solve.sigma_schedule = {0.0, 0.5, 1.0};
    cfg.solve.workers = 1;
    cfg.evolve.t0 = 1.0;
    cfg.evolve.t1 = 1.2;
    cfg.evolve.dt = 0.05;
    cfg.evolve.monitor = false;
    cfg.run.out_dir = out.string();
    cfg.run.workers = 1;
    return cfg;
}

}  // namespace

TEST_CASE("field containers round-trip bitwise", "[io]") {
    const fs::path dir = fresh_dir("fields");
    GridSpec g {12, 3.0, -1.0};

    VectorProfile v = VectorProfile::zeros(g, 0.7);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = std::sin(0.1 * static_cast<double>(i)) + 1e-3 * static_cast<double>(i);
    v.has_mask = true;
    const std::string vpath = (dir / "u.ssvf").string();
    write_field(vpath, v);
    const VectorProfile rv = read_vector_field(vpath);
    REQUIRE(rv.grid.n == g.n);
    REQUIRE(rv.grid.half_width == g.half_width);
    REQUIRE(rv.gamma == 0.7);
    REQUIRE(rv.has_mask);
    REQUIRE(rv.data == v.data);

    TensorProfile t = TensorProfile::zeros(g, 0.9);
    for (std::size_t i = 0; i < t.data.size(); ++i)
        t.data[i] = std::cos(0.05 * static_cast<double>(i));
    const std::string tpath = (dir / "F.ssvf").string();
    write_field(tpath, t);
    const TensorProfile rt = read_tensor_field(tpath);
    REQUIRE(rt.grid.n == g.n);
    REQUIRE(rt.gamma == 0.9);
    REQUIRE_FALSE(rt.has_mask);
    REQUIRE(rt.data == t.data);

    SECTION("rank and header guards") {
        REQUIRE_THROWS_MATCHES(read_vector_field(tpath), IoError,
                               MessageMatches(StartsWith("expected a vector field")));
        REQUIRE_THROWS_MATCHES(read_tensor_field(vpath), IoError,
                               MessageMatches(StartsWith("expected a matrix field")));
        REQUIRE_THROWS_MATCHES(read_field((dir / "missing.ssvf").string()), IoError,
                               MessageMatches(StartsWith("cannot open for reading")));

        const fs::path bad = dir / "bad_magic.ssvf";
        std::ofstream(bad, std::ios::binary) << "XSVF1 not a container";
        REQUIRE_THROWS_MATCHES(read_field(bad.string()), IoError,
                               MessageMatches(StartsWith("not a field container")));

        const fs::path trunc = dir / "trunc.ssvf";
        fs::copy_file(vpath, trunc);
        fs::resize_file(trunc, fs::file_size(trunc) - 16);
        REQUIRE_THROWS_MATCHES(read_field(trunc.string()), IoError,
                               MessageMatches(StartsWith("truncated field data")));

        // rank byte outside {1,2}
        std::string raw = slurp(vpath);
        raw[5] = 3;
        const fs::path badrank = dir / "bad_rank.ssvf";
        std::ofstream(badrank, std::ios::binary) << raw;
        REQUIRE_THROWS_MATCHES(read_field(badrank.string()), IoError,
                               MessageMatches(StartsWith("corrupt field header")));
    }
}

TEST_CASE("csv rows re-parse to the exact doubles", "[io]") {
    const fs::path dir = fresh_dir("csv");
    const fs::path path = dir / "table.csv";
    const std::vector<double> r1 {1.0 / 3.0, 1e-300, -0.0};
    const std::vector<double> r2 {3.141592653589793, 1048576.5, 7.0};
    {
        CsvWriter csv(path.string(), {"a", "b", "c"});
        csv.row(r1);
        csv.row(r2);
        REQUIRE_THROWS_MATCHES(csv.row({1.0}), IoError,
                               MessageMatches(StartsWith("csv row width mismatch")));
        REQUIRE_THROWS_MATCHES(csv.row_text({"x", "y"}), IoError,
                               MessageMatches(StartsWith("csv row width mismatch")));
    }
    const std::vector<std::string> lines = read_lines(path);
    REQUIRE(lines.size() == 3);
    REQUIRE(lines[0] == "a,b,c");
    REQUIRE(parse_csv_row(lines[1]) == r1);
    REQUIRE(parse_csv_row(lines[2]) == r2);

    REQUIRE_THROWS_MATCHES(CsvWriter((dir / "no_such_dir" / "x.csv").string(), {"a"}),
                           IoError, MessageMatches(StartsWith("cannot open for writing")));
}

TEST_CASE("manifest serialization preserves hashes and files", "[io]") {
    // fingerprint pins: offset basis for the empty string, standard vector for "a"
    REQUIRE(fnv1a64("") == 14695981039346656037ull);
    REQUIRE(fnv1a64("a") == 0xaf63dc4c8601ec8cull);

    RunManifest m;
    m.config_text = "x = 1\n";
    m.wall_seconds = 2.5;
    m.add_file("v.ssvf", "profile-correction-velocity");
    m.add_file_once("v.ssvf", "duplicate-role");
    m.add_file_once("table.csv", "summary-table");
    REQUIRE(m.has_file("v.ssvf"));
    REQUIRE_FALSE(m.has_file("w.ssvf"));
    REQUIRE(m.files.size() == 2);
    m.add_metric("alpha", 0.25);
    m.add_metric("beta", -3.0);

    char expect_hash[32];
    std::snprintf(expect_hash, sizeof(expect_hash), "0x%016llx",
                  static_cast<unsigned long long>(fnv1a64(m.config_text)));
    const std::string text = m.to_json();
    REQUIRE_THAT(text, ContainsSubstring(expect_hash));
    REQUIRE_THAT(text, ContainsSubstring("ssvf-manifest-v1"));

    RunManifest p = RunManifest::parse(text);
    REQUIRE(p.config_hash_hex == expect_hash);
    REQUIRE(p.wall_seconds == 2.5);
    REQUIRE(p.files.size() == 2);
    REQUIRE(p.files[0].first == "v.ssvf");
    REQUIRE(p.files[0].second == "profile-correction-velocity");
    REQUIRE(p.metrics.at("alpha") == 0.25);
    REQUIRE(p.metrics.at("beta") == -3.0);

    // a parsed manifest (no config text) re-serializes with the hash verbatim
    p.add_metric("gamma", 1.0);
    REQUIRE_THAT(p.to_json(), ContainsSubstring(expect_hash));

    const fs::path dir = fresh_dir("manifest");
    m.write((dir / "manifest.json").string());
    RunManifest q = RunManifest::parse(slurp(dir / "manifest.json"));
    REQUIRE(q.config_hash_hex == expect_hash);
    REQUIRE(q.metrics.size() == 2);
}

TEST_CASE("config parsing, canonical emission, and env overrides", "[io]") {
    const std::string text = R"([datum]
family = curl_poles
amplitude = 0.05

[grid]
n = 48
half_width = 12
mask_radius = 3.5

[profile]
gamma = 0.75

[solve]
sigma_schedule = 0, 0.5, 1
damping = 0.8
tol = 1e-9
max_iters = 25
anderson_depth = 2
norm_ceiling = 20
divergence_factor = 5
duhamel_nodes = 48
validate_quadrature = yes

[evolve]
t0 = 1
t1 = 1.5
dt = 0.01
record_every = 2
monitor = no

[run]
out_dir = /tmp/somewhere
seed = 7
workers = 3
)";
    const RunConfig cfg = parse_run_config_text(text, false);
    REQUIRE(cfg.datum.family == "curl_poles");
    REQUIRE(cfg.datum.amplitude == 0.05);
    REQUIRE(cfg.grid.n == 48);
    REQUIRE(cfg.grid.half_width == 12.0);
    REQUIRE(cfg.grid.mask_radius == 3.5);
    REQUIRE(cfg.gamma == 0.75);
    REQUIRE(cfg.solve.sigma_schedule == std::vector<double> {0.0, 0.5, 1.0});
    REQUIRE(cfg.solve.damping == 0.8);
    REQUIRE(cfg.solve.tol_fixed_point == 1e-9);
    REQUIRE(cfg.solve.max_iters == 25);
    REQUIRE(cfg.solve.anderson_depth == 2);
    REQUIRE(cfg.solve.duhamel_nodes == 48);
    REQUIRE(cfg.solve.validate_quadrature);
    REQUIRE(cfg.evolve.t1 == 1.5);
    REQUIRE(cfg.evolve.record_every == 2);
    REQUIRE_FALSE(cfg.evolve.monitor);
    REQUIRE(cfg.run.seed == 7);
    REQUIRE(cfg.run.workers == 3);
    REQUIRE(cfg.solve.workers == 3);
    // 48 is not a power of two: warned, not rejected
    REQUIRE(cfg.warnings.size() == 1);
    REQUIRE_THAT(cfg.warnings[0], ContainsSubstring("power of two"));

    SECTION("canonical text is a parse fixed point") {
        const std::string canon = cfg.canonical();
        const RunConfig back = parse_run_config_text(canon, false);
        REQUIRE(back.canonical() == canon);
        REQUIRE(back.grid.n == cfg.grid.n);
        REQUIRE(back.solve.sigma_schedule == cfg.solve.sigma_schedule);
        REQUIRE(back.run.seed == cfg.run.seed);
    }

    SECTION("defaults materialize from a minimal config") {
        const RunConfig d = parse_run_config_text("[datum]\nfamily = u_only\n", false);
        REQUIRE(d.grid.n == 64);
        REQUIRE(d.grid.half_width == 16.0);
        REQUIRE(d.gamma == 0.5);
        REQUIRE(d.solve.sigma_schedule ==
                std::vector<double> {0.0, 0.25, 0.5, 0.75, 1.0});
        REQUIRE(d.solve.damping == 1.0);
        REQUIRE(d.evolve.t1 == 2.0);
        REQUIRE(d.run.out_dir == "out");
        REQUIRE(d.run.workers == 1);
    }

    SECTION("automatic damping rule") {
        RunConfig a = parse_run_config_text(
            "[datum]\nfamily = curl_poles\n[solve]\ndamping = 0\n", false);
        REQUIRE(a.solve.damping == 0.0);
        REQUIRE(a.resolved_damping() == 1.0);  // small data undamped
        a.datum.amplitude = 0.5;
        REQUIRE(a.resolved_damping() == 0.5);
        a.solve.damping = 0.7;
        REQUIRE(a.resolved_damping() == 0.7);
    }

    SECTION("rejections carry exit codes and locations") {
        auto code_of = [](const std::string& t) {
            try {
                parse_run_config_text(t, false);
            } catch (const ConfigError& e) {
                return e.code;
            }
            return -1;
        };
        REQUIRE(code_of("[grid]\nn = 32\n") == exit_missing_key);
        REQUIRE(code_of("[datum]\nfamily = fancy\n") == exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily = tabulated\n") == exit_missing_key);
        REQUIRE(code_of("[datum]\nfamily = curl_poles\ntypo = 1\n") == exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily = curl_poles\namplitude = abc\n") ==
                exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily = curl_poles\n[evolve]\nmonitor = maybe\n") ==
                exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily = curl_poles\n[profile]\ngamma = 1.5\n") ==
                exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily = curl_poles\n[grid]\nn = 6\n") ==
                exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily = curl_poles\n[run]\nseed = -1\n") ==
                exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily = curl_poles\n[run]\nworkers = 0\n") ==
                exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily = curl_poles\n[evolve]\nt1 = 0.5\n") ==
                exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily = curl_poles\n[solve]\nsigma_schedule = ,\n") ==
                exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily = curl_poles\n[solve]\nsigma_schedule = 1, 0.5\n") ==
                exit_bad_value);
        REQUIRE(code_of("family = orphan\n") == exit_bad_value);
        REQUIRE(code_of("[datum\nfamily = curl_poles\n") == exit_bad_value);
        REQUIRE(code_of("[datum]\nfamily curl_poles\n") == exit_bad_value);

        try {
            parse_run_config_text("[datum]\nfamily = curl_poles\namplitude = abc\n",
                                  false);
            FAIL("expected a parse rejection");
        } catch (const ConfigError& e) {
            REQUIRE_THAT(e.what(), ContainsSubstring("datum.amplitude at line 3"));
            REQUIRE_THAT(e.what(), ContainsSubstring("'abc'"));
        }

        REQUIRE_THROWS_AS(parse_run_config("/no/such/dir/config.ini"), ConfigError);
        try {
            parse_run_config("/no/such/dir/config.ini");
        } catch (const ConfigError& e) {
            REQUIRE(e.code == exit_config_unreadable);
            REQUIRE_THAT(e.what(), StartsWith("cannot read config file"));
        }
    }

    SECTION("environment variables override file values") {
        ::setenv("SSVF_GRID_N", "32", 1);
        ::setenv("SSVF_RUN_WORKERS", "2", 1);
        const RunConfig over = parse_run_config_text(text, true);
        ::unsetenv("SSVF_GRID_N");
        ::unsetenv("SSVF_RUN_WORKERS");
        REQUIRE(over.grid.n == 32);
        REQUIRE(over.run.workers == 2);
        REQUIRE(over.grid.half_width == 12.0);  // untouched keys keep file values

        const RunConfig plain = parse_run_config_text(text, true);
        REQUIRE(plain.grid.n == 48);  // overrides cleared with the environment
    }
}

TEST_CASE("trace files round-trip through the tabulated family", "[io]") {
    const fs::path dir = fresh_dir("traces");
    DatumConfig dc;
    dc.family = "curl_poles";
    dc.amplitude = 0.05;
    const DatumTraces d = build_datum(dc);
    const fs::path tf = dir / "trace.txt";
    write_trace_file(tf.string(), d);

    DatumConfig tc;
    tc.family = "tabulated";
    tc.amplitude = 0.05;
    tc.trace_file = tf.string();
    const DatumTraces d2 = build_datum(tc);
    REQUIRE(d2.rule.size() == d.rule.size());
    double worst = 0.0;
    for (std::size_t q = 0; q < d.rule.size(); ++q) {
        for (int c = 0; c < 3; ++c)
            worst = std::max(worst, std::abs(d.u.value(c, q) - d2.u.value(c, q)));
        for (int c = 0; c < 9; ++c)
            worst = std::max(worst, std::abs(d.F.value(c, q) - d2.F.value(c, q)));
    }
    // the written trace is already normalized, so re-normalization is a
    // factor-1 rescale up to rounding
    REQUIRE(worst < 1e-15);
    REQUIRE(d2.scale == Approx(1.0).epsilon(1e-12));

    SECTION("datum error surfaces") {
        REQUIRE_THROWS_MATCHES(build_datum(DatumConfig {"odd_family", 0.1, ""}),
                               DatumError, MessageMatches(StartsWith("unknown datum family")));

        DatumConfig miss = tc;
        miss.trace_file = (dir / "absent.txt").string();
        REQUIRE_THROWS_MATCHES(build_datum(miss), DatumError,
                               MessageMatches(StartsWith("cannot read trace file")));

        const fs::path junk = dir / "junk.txt";
        std::ofstream(junk) << "nonsense 4 8\n";
        DatumConfig badhdr = tc;
        badhdr.trace_file = junk.string();
        REQUIRE_THROWS_MATCHES(build_datum(badhdr), DatumError,
                               MessageMatches(StartsWith("trace file must start with")));

        const fs::path badrule = dir / "badrule.txt";
        std::ofstream(badrule) << "ssvf-trace 0 8\n";
        DatumConfig badr = tc;
        badr.trace_file = badrule.string();
        REQUIRE_THROWS_MATCHES(build_datum(badr), DatumError,
                               MessageMatches(StartsWith("bad trace rule size")));

        const fs::path shorttf = dir / "short.txt";
        std::ofstream(shorttf) << "ssvf-trace 2 4\n0.1 0.2 0.3 0 0 0 0 0\n";
        DatumConfig sh = tc;
        sh.trace_file = shorttf.string();
        REQUIRE_THROWS_MATCHES(build_datum(sh), DatumError,
                               MessageMatches(StartsWith("truncated trace file at node")));

        const fs::path zeros = dir / "zeros.txt";
        {
            std::ofstream os(zeros);
            os << "ssvf-trace 2 4\n";
            for (int q = 0; q < 8; ++q) {
                for (int c = 0; c < 12; ++c) os << "0 ";
                os << "\n";
            }
        }
        DatumConfig z = tc;
        z.trace_file = zeros.string();
        REQUIRE_THROWS_MATCHES(build_datum(z), DatumError,
                               MessageMatches(StartsWith("datum trace is identically zero")));
    }

    SECTION("velocity-only family leaves the deformation trace empty") {
        DatumConfig uo;
        uo.family = "u_only";
        uo.amplitude = 0.05;
        const DatumTraces du = build_datum(uo);
        double fsup = 0.0, usup = 0.0;
        for (std::size_t q = 0; q < du.rule.size(); ++q) {
            for (int c = 0; c < 9; ++c) fsup = std::max(fsup, std::abs(du.F.value(c, q)));
            for (int c = 0; c < 3; ++c) usup = std::max(usup, std::abs(du.u.value(c, q)));
        }
        REQUIRE(fsup == 0.0);
        REQUIRE(usup > 0.0);
    }
}

TEST_CASE("pipeline subcommands produce complete deterministic artifacts", "[io]") {
    const fs::path dir_a = fresh_dir("run_a");
    const fs::path dir_b = fresh_dir("run_b");
    std::ostringstream log;

    SECTION("solve, evolve, verify, and the failure exits") {
        REQUIRE(run_pipeline(tiny_config(dir_a), "solve-profile", log) == exit_ok);
        for (const char* name : {"config.ini", "manifest.json", "u0.ssvf", "F0.ssvf",
                                 "continuation.csv", "v.ssvf", "H.ssvf"})
            REQUIRE(fs::exists(dir_a / name));

        RunManifest man_a = RunManifest::parse(slurp(dir_a / "manifest.json"));
        REQUIRE(man_a.metrics.at("stalled") == 0.0);
        REQUIRE(man_a.metrics.at("sigma_final") == 1.0);
        REQUIRE(man_a.metrics.at("final_residual") < 1e-6);
        REQUIRE(man_a.metrics.at("max_rel_div_v") < 1e-10);
        REQUIRE(man_a.metrics.at("max_rel_div_H") < 1e-10);
        for (const char* name : {"u0.ssvf", "v.ssvf", "continuation.csv"})
            REQUIRE(man_a.has_file(name));
        {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "0x%016llx",
                          static_cast<unsigned long long>(
                              fnv1a64(tiny_config(dir_a).canonical())));
            REQUIRE(man_a.config_hash_hex == buf);
        }

        // the evolve subcommand repeats the identical solve stage: its dumps
        // must be byte-identical (manifest differs by wall time only)
        REQUIRE(run_pipeline(tiny_config(dir_b), "evolve", log) == exit_ok);
        for (const char* name : {"u0.ssvf", "F0.ssvf", "v.ssvf", "H.ssvf",
                                 "continuation.csv"})
            REQUIRE(slurp(dir_a / name) == slurp(dir_b / name));
        for (const char* name : {"trajectory.csv", "u_final.ssvf", "F_final.ssvf"})
            REQUIRE(fs::exists(dir_b / name));

        RunManifest man_b = RunManifest::parse(slurp(dir_b / "manifest.json"));
        REQUIRE(man_b.metrics.at("steps") >= 4.0);
        REQUIRE(man_b.metrics.at("t_final") == Approx(1.2).margin(1e-9));
        REQUIRE(man_b.metrics.at("energy_residual") < 1e-2);
        const std::vector<std::string> traj = read_lines(dir_b / "trajectory.csv");
        REQUIRE(traj.size() >= 3);
        REQUIRE(traj[0] ==
                "t,energy,dissipation,l2_u,l2_F,lm_u,lm_F,st_norm,div_u,div_F,kappa");
        REQUIRE(parse_csv_row(traj[1]).size() == 11);
        REQUIRE(parse_csv_row(traj[1])[0] == 1.0);

        // verify over the solve directory: gates pass, manifest is merged
        RunConfig vc = tiny_config(dir_a);
        vc.run.workers = 2;
        REQUIRE(run_pipeline(vc, "verify", log) == exit_ok);
        for (const char* name : {"diagnostics.txt", "diagnostics.csv", "decay.csv"})
            REQUIRE(fs::exists(dir_a / name));
        RunManifest man_v = RunManifest::parse(slurp(dir_a / "manifest.json"));
        REQUIRE(man_v.metrics.at("verify_passed") == 1.0);
        REQUIRE(man_v.metrics.at("verify_profile_max") < 1e-3);
        REQUIRE(man_v.metrics.at("sigma_final") == 1.0);  // original metrics kept
        REQUIRE(man_v.config_hash_hex == man_a.config_hash_hex);
        REQUIRE(man_v.has_file("diagnostics.txt"));
        REQUIRE(man_v.has_file("config.ini"));
        const std::string diag = slurp(dir_a / "diagnostics.txt");
        REQUIRE_THAT(diag, ContainsSubstring("verify_status = pass"));
        REQUIRE_THAT(diag, ContainsSubstring("profile_momentum_max = "));

        // second verify: files are not duplicated in the merged manifest
        REQUIRE(run_pipeline(vc, "verify", log) == exit_ok);
        RunManifest man_v2 = RunManifest::parse(slurp(dir_a / "manifest.json"));
        int diag_count = 0;
        for (const auto& f : man_v2.files)
            if (f.first == "diagnostics.txt") ++diag_count;
        REQUIRE(diag_count == 1);
    }

    SECTION("linear schedule dumps exact zero corrections") {
        const fs::path dir_c = fresh_dir("run_c");
        RunConfig cfg = tiny_config(dir_c);
        cfg.solve.sigma_schedule = {0.0};
        REQUIRE(run_pipeline(cfg, "solve-profile", log) == exit_ok);
        const VectorProfile v = read_vector_field((dir_c / "v.ssvf").string());
        const TensorProfile H = read_tensor_field((dir_c / "H.ssvf").string());
        for (double x : v.data) REQUIRE(x == 0.0);
        for (double x : H.data) REQUIRE(x == 0.0);
        RunManifest man = RunManifest::parse(slurp(dir_c / "manifest.json"));
        REQUIRE(man.metrics.at("sigma_final") == 0.0);

        // breaking a dump makes verify fail its gates with the documented code
        VectorProfile broken = VectorProfile::zeros(v.grid, 0.5);
        for (std::size_t i = 0; i < v.grid.size(); ++i) broken.data[i] = 1.0;
        write_field((dir_c / "v.ssvf").string(), broken);
        REQUIRE(run_pipeline(cfg, "verify", log) == exit_verify_failed);
        RunManifest man2 = RunManifest::parse(slurp(dir_c / "manifest.json"));
        REQUIRE(man2.metrics.at("verify_passed") == 0.0);
        REQUIRE(man2.metrics.at("verify_profile_max") > 1e-3);
        REQUIRE_THAT(slurp(dir_c / "diagnostics.txt"),
                     ContainsSubstring("verify_status = fail"));
    }

    SECTION("exit codes for unusable inputs") {
        const fs::path dir_d = fresh_dir("run_d");
        RunConfig cfg = tiny_config(dir_d);
        REQUIRE(run_pipeline(cfg, "bogus-subcommand", log) == exit_usage);
        // verify without a manifest
        REQUIRE(run_pipeline(cfg, "verify", log) == exit_config_unreadable);
        // unreadable trace file inside a run
        cfg.datum.family = "tabulated";
        cfg.datum.trace_file = (dir_d / "absent.txt").string();
        REQUIRE(run_pipeline(cfg, "caloric", log) == exit_config_unreadable);
        // structurally bad trace file
        const fs::path junk = dir_d / "junk.txt";
        std::ofstream(junk) << "nonsense\n";
        cfg.datum.trace_file = junk.string();
        REQUIRE(run_pipeline(cfg, "caloric", log) == exit_bad_value);
    }

    SECTION("caloric subcommand summarizes the background") {
        const fs::path dir_e = fresh_dir("run_e");
        RunConfig cfg = tiny_config(dir_e);
        cfg.grid = GridSpec {16, 8.0, -1.0};
        REQUIRE(run_pipeline(cfg, "caloric", log) == exit_ok);
        for (const char* name : {"u0.ssvf", "F0.ssvf", "caloric_summary.csv"})
            REQUIRE(fs::exists(dir_e / name));
        RunManifest man = RunManifest::parse(slurp(dir_e / "manifest.json"));
        REQUIRE(man.metrics.at("quad_checked") == 1.0);
        REQUIRE(man.metrics.at("weighted_sup_u0") > 0.0);
        REQUIRE(man.metrics.at("trace_scale") > 0.0);
        const std::vector<std::string> lines = read_lines(dir_e / "caloric_summary.csv");
        REQUIRE(lines.size() == 3);
        REQUIRE(lines[0] == "field,sup,weighted_sup,quad_refine_diff");
    }
}
