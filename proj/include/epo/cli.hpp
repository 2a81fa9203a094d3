#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epo/model.hpp"

namespace epo {

// Shared command-line state; the parser in tools/ fills one of these and
// dispatches to a command function so everything below stays testable.
struct CliCommon {
    std::string scenario;
    std::string out = "out";
    std::vector<std::string> sets; // key=value overrides, applied in order
    bool has_seed = false;
    uint64_t seed = 0;
};

// key is "seed" or "params.<name>"; values are parsed per field type.
void apply_override(Scenario& s, const std::string& key, const std::string& value);

// Scenario loading shared by the commands: overrides applied, warnings
// printed to stderr, validation errors thrown.
Scenario load_for_run(const CliCommon& args);

int cmd_validate(const CliCommon& args);

// records_csv is a confidence-record file; grid_arg is a comma-separated
// ascending threshold list applied to every branch (empty: the default grid).
int cmd_exit_table(const std::string& records_csv, const std::string& grid_arg,
                   const std::string& out);
int cmd_optimize(const CliCommon& args, const std::string& algorithm);
int cmd_simulate(const CliCommon& args, const std::string& algorithm, double duration,
                 const std::string& records_csv);
int cmd_experiment(const CliCommon& args, const std::vector<std::string>& algorithms, int slots,
                   int seeds, int workers);
int cmd_gradcheck(const std::string& out, uint64_t seed, int instances);

// Diagnostic logging to stderr, enabled by the EPO_LOG environment variable.
bool log_enabled();
void log_line(const std::string& text);

} // namespace epo
