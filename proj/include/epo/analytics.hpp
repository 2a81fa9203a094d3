#pragma once

#include <vector>

#include "epo/model.hpp"

namespace epo {

// Steady-state traffic implied by a strategy: phi is the task rate entering a
// node (tasks/s), lambda the work rate at a server (GFLOP/s), edge_flow the
// task rate on each link after the sender's surviving ratio is applied.
struct FlowState {
    std::vector<double> phi;
    std::vector<double> lambda;
    std::vector<double> edge_flow;
    double Phi = 0.0; // total task arrival rate entering the system
};

struct Objective {
    double T = 0.0; // mean response delay, capacity-clamped
    double N = 0.0; // exterior penalty
    double R = 0.0; // T + N
};

// Per-edge repulsive factor (queue curvature at the receiver, transfer cost,
// accumulated downstream cost and the penalty slope) plus its propagated
// per-node aggregate and the objective derivative for each free coordinate.
struct GradientField {
    std::vector<double> delta;  // per edge
    std::vector<double> omega;  // per node
    std::vector<double> dR_dp;  // per edge
};

struct ThresholdImpact {
    std::vector<double> dD_per_node; // aligned with the branch layer's node list
    double dD_total = 0.0;
    double dU = 0.0;
};

// survival holds one ratio per layer 0..H (1.0 where there is no branch).
FlowState propagate_flows(const Scenario& s, const Strategy& p, const std::vector<double>& survival);

// One-way transfer latency of a stage input over a link.
double transfer_delay(const Scenario& s, int edge, const FlowState& flow);

// Processor-sharing sojourn at a server; strict mode refuses saturation.
double compute_delay(const Scenario& s, int node, const FlowState& flow, bool strict);

// Traffic-weighted mean response delay.  Strict evaluation raises
// SaturatedError when any server is at or over capacity.
double system_delay(const Scenario& s, const Strategy& p, const std::vector<double>& survival);

double penalty(const Scenario& s, const FlowState& flow);

// Penalized objective: delay with work rates clamped to stay below capacity
// by the margin epsilon, plus the exterior penalty on the unclamped rates.
// Finite for every strategy.
Objective objective_R(const Scenario& s, const Strategy& p, const std::vector<double>& survival);

// Weighted trade-off of delay against normalized accuracy.  Lower is better.
double utility_U(double T, double accuracy, double a, const AccuracyBounds& bounds);

GradientField compute_gradients(const Scenario& s, const Strategy& p,
                                const std::vector<double>& survival);
GradientField compute_gradients(const Scenario& s, const Strategy& p,
                                const std::vector<double>& survival, const FlowState& flow);

// Central finite difference of the penalized objective with respect to one
// probability entry, treated as a free coordinate (no renormalization).
double fd_gradient_oracle(const Scenario& s, const Strategy& p, const std::vector<double>& survival,
                          int edge, double step);

// First-order delay change when the surviving ratio of one branch moves,
// and the resulting utility change against a normalized accuracy delta.
double delta_delay_estimate(double phi, double Phi, double surviving, double surviving_new,
                            double omega);
double delta_utility(double a, double dD_total, double dA_normalized);

ThresholdImpact threshold_impact(const Scenario& s, const Strategy& p,
                                 const std::vector<double>& survival, int branch_layer,
                                 double surviving_new, double dA_normalized, double a);
ThresholdImpact threshold_impact(const Scenario& s, const std::vector<double>& survival,
                                 const FlowState& flow, const GradientField& grads,
                                 int branch_layer, double surviving_new, double dA_normalized,
                                 double a);

// Repulsive factor of a single edge given receiver state and downstream cost.
double repulsive_factor(double mu, double lambda, double alpha_next, double beta_next, double rate,
                        double omega_next, double K, double Phi, double epsilon);

} // namespace epo
