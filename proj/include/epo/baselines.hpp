#pragma once

#include <cstdint>
#include <vector>

#include "epo/model.hpp"

namespace epo {

struct BaselineConfig {
    // Selfish best-response solver.
    double ngto_tol = 1e-4;
    int ngto_max_cycles = 200;
    int ngto_inner_steps = 500;
    double ngto_inner_step = 0.05;
    // Genetic path search.
    int ga_population = 30;
    int ga_generations = 50;
    double ga_mutation = 0.1;
    int ga_tournament = 3;
    // When set, every source plans against the load snapshot taken before any
    // of them committed, mimicking planning on outdated information.
    bool ga_stale_info = false;
};

// Split proportional to receiver capacity.
Strategy cf_strategy(const Scenario& s);

// Split proportional to link bandwidth.
Strategy bf_strategy(const Scenario& s);

struct NgtoResult {
    Strategy strategy;
    bool converged = false;
    int cycles = 0;
};

// Cyclic best response: each offloader in turn minimizes its own expected
// per-hop cost (transfer plus receiver sojourn including its own load) by
// projected gradient over the simplex, taking everyone else as fixed.
NgtoResult ngto_solve(const Scenario& s, const std::vector<double>& survival,
                      const BaselineConfig& cfg = {});

struct GaResult {
    Strategy strategy;
    std::vector<std::vector<int>> paths;                   // per source, node index per layer 1..H
    std::vector<std::vector<double>> best_fitness_history; // per source, per generation
};

// Sources commit one after another; each runs a small genetic search over
// full paths with fitness equal to the analytic end-to-end delay under the
// loads committed so far.  Source rows are one-hot; server rows follow the
// flow each committed path pushes through them.
GaResult ga_solve(const Scenario& s, const std::vector<double>& survival, uint64_t seed,
                  const BaselineConfig& cfg = {});

} // namespace epo
