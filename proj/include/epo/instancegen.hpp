#pragma once

#include <cstdint>

#include "epo/model.hpp"

namespace epo {

// Knobs for randomly generated pipeline instances.  Capacities are scaled so
// the most loaded server under an even split sits at a utilization drawn from
// [load_lo, load_hi], which keeps instances feasible by construction.
struct InstanceSpec {
    int depth_min = 2, depth_max = 4;
    int eds_min = 2, eds_max = 5;
    int width_min = 2, width_max = 5;
    double load_lo = 0.3, load_hi = 0.85;
    bool with_exits = true;
    int64_t exit_samples = 400;
};

Scenario random_instance(uint64_t seed, const InstanceSpec& spec = {});

// Row-stochastic strategy with strictly positive entries; each row is an
// exponential draw normalized exactly to one.
Strategy random_strategy(const Scenario& s, uint64_t seed);

// Random strategy blended toward the even split until every server stays
// strictly inside capacity (95% of mu - epsilon) under the given survival.
Strategy feasible_random_strategy(const Scenario& s, const std::vector<double>& survival,
                                  uint64_t seed);

} // namespace epo
