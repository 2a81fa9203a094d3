#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "epo/exit_profile.hpp"

namespace epo {

// One pipeline stage: computing demand per task in GFLOP and the size of the
// input it consumes in MB.  Stages are numbered 1..H.
struct SubModelSpec {
    double alpha = 0.0;   // GFLOP per task
    double beta = 0.0;    // MB transferred into this stage
    bool has_exit = false;

    bool operator==(const SubModelSpec&) const = default;
};

// Devices: layer 0 holds task sources with a fixed arrival rate, layers 1..H
// hold servers with a processing capacity in GFLOP/s.  mode list entries are
// alternative capacities the device can switch to between time slots.
struct NodeSpec {
    std::string id;
    int layer = 0;
    double mu = 0.0;            // GFLOP/s, layers >= 1
    double arrival_rate = 0.0;  // tasks/s, layer 0 only
    std::vector<double> modes;  // optional capacity modes, layers >= 1

    bool operator==(const NodeSpec&) const = default;
};

// Directed link between adjacent layers with a transfer rate in MB/s.
struct LinkSpec {
    std::string from;
    std::string to;
    double rate = 0.0;

    bool operator==(const LinkSpec&) const = default;
};

struct AlgoParams {
    double a = 0.5;            // delay/accuracy trade-off weight in [0,1]
    double K = 1e6;            // penalty coefficient
    double epsilon = 0.0;      // capacity margin; 0 means derive 0.01 * min mu
    double tau_p = 0.1;        // strategy step in (0,1]
    int tau_c = 1;             // threshold step in grid units
    int m = 10;                // rounds between threshold updates
    int n = 50;                // rounds per configuration phase
    double slot_seconds = 5.0;
    double config_phase_ms = 100.0;
    double comm_delay_ms = 2.0;
    bool backtrack = true;     // per-round step halving when the objective would rise
    bool early_stop = false;   // stop when max row change < 1e-6

    bool operator==(const AlgoParams&) const = default;
};

struct Edge {
    int from = 0; // node index
    int to = 0;
    double rate = 0.0;
};

// A loaded scenario with derived adjacency.  Nodes are ordered by
// (layer, id); edges by (from, to) in that order.  Declarative fields only
// participate in equality so serialization round-trips compare cleanly.
struct Scenario {
    int version = 1;
    std::vector<SubModelSpec> sub_models; // index 0 is stage 1
    std::vector<NodeSpec> nodes;
    std::vector<LinkSpec> links;
    AlgoParams params;
    uint64_t seed = 0;
    std::shared_ptr<const ExitTable> exit_table;

    // Files the loader actually read, scenario first; feeds run manifests.
    std::vector<std::string> source_files;

    // Derived, populated by finalize().
    std::vector<Edge> edges;
    std::vector<std::vector<int>> successors;   // per node, edge indices, ordered by target id
    std::vector<std::vector<int>> predecessors; // per node, edge indices, ordered by source id
    std::vector<std::vector<int>> layer_nodes;  // node indices per layer 0..H

    int depth() const { return static_cast<int>(sub_models.size()); }
    int node_index(const std::string& id) const;
    const SubModelSpec& stage(int h) const { return sub_models.at(static_cast<size_t>(h) - 1); }

    // Rebuild derived adjacency after editing declarative fields.
    void finalize();

    bool operator==(const Scenario& o) const {
        return version == o.version && sub_models == o.sub_models && nodes == o.nodes &&
               links == o.links && params == o.params && seed == o.seed;
    }
};

// Offloading strategy: one probability row per node, aligned with
// Scenario::successors order.  Terminal-layer rows are empty.
struct Strategy {
    std::vector<std::vector<double>> rows;

    bool operator==(const Strategy&) const = default;
};

struct Diagnostic {
    enum class Severity { Error, Warning };
    Severity severity = Severity::Error;
    std::string message;
};

Scenario load_scenario(const std::string& path);
Scenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir);
nlohmann::ordered_json scenario_to_json(const Scenario& s);

std::vector<Diagnostic> validate_scenario(const Scenario& s);
std::vector<Diagnostic> validate_strategy(const Scenario& s, const Strategy& p);

// Equal split over each successor set; the last entry absorbs the rounding
// residual so every row sums to exactly 1.
Strategy uniform_strategy(const Scenario& s);

bool has_errors(const std::vector<Diagnostic>& diags);
std::string format_diagnostics(const std::vector<Diagnostic>& diags);

nlohmann::ordered_json strategy_to_json(const Scenario& s, const Strategy& p);
Strategy strategy_from_json(const Scenario& s, const nlohmann::json& j);

// Threshold setting serialization against the scenario's exit table.
nlohmann::ordered_json thresholds_to_json(const Scenario& s, const ThresholdSetting& c);
ThresholdSetting thresholds_from_json(const Scenario& s, const nlohmann::json& j);

} // namespace epo
