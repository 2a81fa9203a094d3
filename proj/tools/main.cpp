#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "epo/cli.hpp"
#include "epo/manifest.hpp"

namespace {

void add_common(CLI::App* sub, epo::CliCommon& common, bool* seed_given) {
    sub->add_option("scenario", common.scenario, "scenario JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "output directory (default: out)");
    sub->add_option("--set", common.sets, "override, key=value (repeatable)");
    sub->add_option("--seed", common.seed, "root seed, overrides the scenario seed")
        ->each([seed_given](const std::string&) { *seed_given = true; });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(epo::kToolVersion) +
                 " - offloading and early-exit planner for layered edge pipelines"};
    app.require_subcommand(1);

    epo::CliCommon common;
    bool seed_given = false;

    CLI::App* validate = app.add_subcommand("validate", "check a scenario and print diagnostics");
    add_common(validate, common, &seed_given);

    std::string records_path;
    std::string grid_arg;
    std::string table_out = "out";
    CLI::App* exit_table = app.add_subcommand("exit-table", "build and export the threshold table");
    exit_table->add_option("records", records_path, "confidence records CSV")
        ->required()
        ->check(CLI::ExistingFile);
    exit_table->add_option("--grid", grid_arg,
                           "comma-separated ascending thresholds (default: 0,0.05,...,1)");
    exit_table->add_option("--out", table_out, "output directory (default: out)");

    std::string algorithm = "dto-ee";
    CLI::App* optimize = app.add_subcommand("optimize", "solve one configuration phase");
    add_common(optimize, common, &seed_given);
    optimize->add_option("--alg", algorithm,
                         "dto-ee | dto-fixed:<c> | cf | bf | ngto | ga (default: dto-ee)");

    std::string sim_algorithm = "dto-ee";
    std::string records_csv;
    double duration = 60.0;
    CLI::App* simulate = app.add_subcommand("simulate", "optimize, then replay in the simulator");
    add_common(simulate, common, &seed_given);
    simulate->add_option("--alg", sim_algorithm, "algorithm, as in optimize");
    simulate->add_option("--duration", duration, "simulated seconds (default: 60)");
    simulate->add_option("--records", records_csv, "confidence records CSV for replayed exits")
        ->check(CLI::ExistingFile);

    std::string exp_algs;
    int slots = 100;
    int seeds = 1;
    int workers = 1;
    CLI::App* experiment = app.add_subcommand("experiment", "multi-slot comparison run");
    add_common(experiment, common, &seed_given);
    experiment->add_option("--algs", exp_algs,
                           "comma-separated algorithms (default: dto-ee,cf,bf,ngto,ga)");
    experiment->add_option("--slots", slots, "time slots per run (default: 100)");
    experiment->add_option("--seeds", seeds, "independent seeded runs (default: 1)");
    experiment->add_option("--workers", workers, "worker threads across runs (default: 1)");

    std::string grad_out = "out";
    std::uint64_t grad_seed = 1;
    int grad_instances = 100;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "compare analytic gradients against finite differences");
    gradcheck->add_option("--out", grad_out, "output directory (default: out)");
    gradcheck->add_option("--seed", grad_seed, "root seed (default: 1)");
    gradcheck->add_option("--instances", grad_instances, "random instances (default: 100)");

    try {
        app.parse(argc, argv);
        common.has_seed = seed_given;
        if (validate->parsed()) return epo::cmd_validate(common);
        if (exit_table->parsed()) return epo::cmd_exit_table(records_path, grid_arg, table_out);
        if (optimize->parsed()) return epo::cmd_optimize(common, algorithm);
        if (simulate->parsed()) return epo::cmd_simulate(common, sim_algorithm, duration, records_csv);
        if (experiment->parsed()) {
            std::vector<std::string> names;
            std::string cur;
            for (char ch : exp_algs + ",") {
                if (ch == ',') {
                    if (!cur.empty()) names.push_back(cur);
                    cur.clear();
                } else {
                    cur.push_back(ch);
                }
            }
            return epo::cmd_experiment(common, names, slots, seeds, workers);
        }
        if (gradcheck->parsed()) return epo::cmd_gradcheck(grad_out, grad_seed, grad_instances);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
