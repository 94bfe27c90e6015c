// Command-line front end: one subcommand per pipeline, flags override the
// config file, documented exit codes on every path.

#include <clocale>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssvf/pipeline.hpp"

int main(int argc, char** argv) {
    std::setlocale(LC_ALL, "C");

    CLI::App app{"forward self-similar viscoelastic flow toolkit"};
    app.set_version_flag("--version", std::string(ssvf::version_string));
    app.require_subcommand(1);

    struct SubSpec {
        const char* name;
        const char* help;
    };
    const std::vector<SubSpec> specs = {
        {"caloric", "evaluate the heat extension of the datum and dump it"},
        {"solve-profile", "run the sigma continuation to the self-similar profile"},
        {"evolve", "solve the profile, then advance the flow over the time window"},
        {"verify", "recompute diagnostics for an existing run directory"},
        {"sweep-sigma", "tabulate the continuation without field dumps"},
    };

    std::string config_path, out_dir;
    int workers = 1;
    std::uint64_t seed = 0;
    for (const auto& s : specs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        sub->add_option("--config", config_path, "run configuration file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides run.out_dir)");
        sub->add_option("--workers", workers, "worker threads (overrides run.workers)");
        sub->add_option("--seed", seed, "run seed (overrides run.seed)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ssvf::exit_ok : ssvf::exit_usage;
    }

    CLI::App* active = app.get_subcommands().front();
    try {
        ssvf::RunConfig cfg = ssvf::parse_run_config(config_path);
        if (active->count("--out")) cfg.run.out_dir = out_dir;
        if (active->count("--workers")) {
            if (workers < 1) {
                std::cerr << "workers must be at least 1\n";
                return ssvf::exit_bad_value;
            }
            cfg.run.workers = workers;
            cfg.solve.workers = workers;
        }
        if (active->count("--seed")) cfg.run.seed = seed;
        for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
        return ssvf::run_pipeline(cfg, active->get_name(), std::cout);
    } catch (const ssvf::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return ssvf::exit_bad_value;
    }
}
