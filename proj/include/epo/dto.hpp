#pragma once

#include <string>
#include <vector>

#include "epo/analytics.hpp"
#include "epo/model.hpp"

namespace epo {

// Resource-update-request: an offloader tells a receiver the work it will
// forward along one link.  Resource-update-state flows the other way with the
// receiver's load, capacity and accumulated downstream cost.  Both carry the
// sender's threshold setting so drift is detectable.
struct RurMessage {
    double xi = 0.0; // GFLOP/s pushed over the link
    ThresholdSetting c;
    bool present = false;
};

struct RusMessage {
    double lambda = 0.0;
    double mu = 0.0;
    double omega = 0.0;
    ThresholdSetting c;
    bool present = false;
};

// Shared blackboard for one configuration phase.  Mailboxes are indexed by
// edge; per-node flow and cost fields are refreshed every round by the two
// message waves (flows up the pipeline, costs back down).
struct RoundState {
    const Scenario* scenario = nullptr;
    Strategy p;
    ThresholdSetting c;
    std::vector<double> survival; // per layer, from the exit table at c
    double Phi = 0.0;

    std::vector<double> phi;    // per node
    std::vector<double> lambda; // per node
    std::vector<double> omega;  // per node
    std::vector<double> delta;  // per edge, refreshed in the cost wave

    std::vector<RurMessage> rur; // per edge
    std::vector<RusMessage> rus; // per edge

    int round = 0;
};

struct TraceRow {
    int round = 0;
    double R = 0.0, T = 0.0, N = 0.0;
    double U = 0.0;
    bool u_defined = false;
    std::vector<double> thresholds; // per layer 1..H; 1.0 where no branch exists
};

struct ConfigResult {
    Strategy strategy;
    ThresholdSetting thresholds;
    std::vector<TraceRow> trace;
    int rounds_run = 0;
    bool early_stopped = false;
};

RoundState init_round_state(const Scenario& s, const Strategy& p0, const ThresholdSetting& c0);

// Offloader side of the flow wave: refresh the work announcements on every
// outgoing link from the current row and task rate.
void emit_rur(RoundState& st, int node);

// Receiver side of the flow wave: sum announced work into lambda and phi.
void collect_rur(RoundState& st, int node);

// Cost wave step for one receiver: fold successor costs into omega (zero at
// the terminal layer) and broadcast state to every predecessor.  Requires the
// successor layer to have broadcast already.
std::vector<RusMessage> receiver_round(RoundState& st, int node);

// Strategy step for one offloader: repulsive factor per successor from the
// received states, then shift tau of the mass on strictly worse successors
// onto the cheapest one (ties keep their mass, lowest id wins the argmin).
void offloader_round(RoundState& st, int node, double tau);

// Threshold step for one branch layer: evaluate one grid step in each
// direction with the first-order delay estimate against the normalized
// accuracy change, apply the better step if it lowers utility.
void threshold_round(RoundState& st, int branch_layer);

struct RoundOutcome {
    bool moved = false;
    double tau_used = 0.0;
};

// One full synchronous superstep: flow wave, cost wave, strategy update with
// optional objective backtracking, scheduled threshold update.
RoundOutcome run_round(RoundState& st, bool freeze_thresholds);

ConfigResult run_config_phase(const Scenario& s, const Strategy& p0, const ThresholdSetting& c0,
                              bool freeze_thresholds);

std::string trace_to_csv(const std::vector<TraceRow>& trace);

} // namespace epo
