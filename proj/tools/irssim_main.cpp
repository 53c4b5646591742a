#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

#include "irssim/experiment.hpp"

namespace {

// flag > environment > file, applied lowest priority first
void apply_environment(irssim::ExperimentSpec& spec) {
    if (const char* s = std::getenv("IRSSIM_SEED")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(s, &end, 10);
        if (end == s || *end != '\0')
            throw irssim::config_error("IRSSIM_SEED is not an integer: '" + std::string(s) + "'");
        spec.scenario.seed = v;
    }
    if (const char* s = std::getenv("IRSSIM_WORKERS")) {
        char* end = nullptr;
        long v = std::strtol(s, &end, 10);
        if (end == s || *end != '\0' || v < 0)
            throw irssim::config_error("IRSSIM_WORKERS is not a valid count: '" + std::string(s) + "'");
        spec.workers = static_cast<int>(v);
    }
}

void validate_all_points(const irssim::ExperimentSpec& spec) {
    std::vector<double> values = spec.sweep_values;
    if (spec.sweep == "none") values = {0.0};
    for (double v : values) {
        irssim::ScenarioConfig cfg = spec.scenario;
        irssim::apply_sweep(cfg, spec.sweep, v);
        cfg.validate();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Roadside reflecting-panel link simulator"};
    app.require_subcommand(1);

    std::string run_file, out_path;
    std::uint64_t seed = 0;
    int runs = 0, workers = 0;
    bool trace = false;
    CLI::App* cmd_run = app.add_subcommand("run", "Run an experiment file, write CSV and JSON results");
    cmd_run->add_option("file", run_file, "experiment file")->required()->check(CLI::ExistingFile);
    cmd_run->add_option("-o,--out", out_path, "output CSV path (default <name>.csv)");
    cmd_run->add_option("--seed", seed, "override the scenario seed");
    cmd_run->add_option("--runs", runs, "override the Monte Carlo run count");
    cmd_run->add_option("--workers", workers, "override the worker thread count (0 = hardware)");
    cmd_run->add_flag("--trace", trace, "include per-run and per-block traces in the JSON output");

    std::string validate_file;
    CLI::App* cmd_validate = app.add_subcommand("validate", "Check an experiment file and exit");
    cmd_validate->add_option("file", validate_file, "experiment file")
        ->required()
        ->check(CLI::ExistingFile);

    CLI::App* cmd_defaults =
        app.add_subcommand("defaults", "Print a complete experiment file with default values");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (cmd_defaults->parsed()) {
            std::cout << irssim::serialize_experiment(irssim::ExperimentSpec{});
            return 0;
        }
        if (cmd_validate->parsed()) {
            irssim::ExperimentSpec spec = irssim::load_experiment_file(validate_file);
            apply_environment(spec);
            validate_all_points(spec);
            std::cout << "ok: " << spec.name << " (" << spec.runs << " runs, sweep " << spec.sweep
                      << ")\n";
            return 0;
        }

        irssim::ExperimentSpec spec = irssim::load_experiment_file(run_file);
        apply_environment(spec);
        if (cmd_run->count("--seed")) spec.scenario.seed = seed;
        if (cmd_run->count("--runs")) spec.runs = runs;
        if (cmd_run->count("--workers")) spec.workers = workers;
        if (trace) spec.trace = true;
        validate_all_points(spec);

        std::string out = out_path.empty() ? spec.name + ".csv" : out_path;
        irssim::ExperimentOutput files = irssim::run_experiment(spec, out);
        std::cout << "wrote " << files.csv_path << "\n";
        std::cout << "wrote " << files.json_path << "\n";
        return 0;
    } catch (const irssim::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
