#include "epo/analytics.hpp"

#include <algorithm>
#include <cmath>

#include "epo/errors.hpp"
#include "epo/textio.hpp"

namespace epo {

namespace {

void check_survival(const Scenario& s, const std::vector<double>& survival) {
    if (survival.size() != static_cast<size_t>(s.depth()) + 1)
        throw DomainError("survival vector must carry one ratio per layer 0..H");
}

} // namespace

FlowState propagate_flows(const Scenario& s, const Strategy& p, const std::vector<double>& survival) {
    check_survival(s, survival);
    const int H = s.depth();
    FlowState f;
    f.phi.assign(s.nodes.size(), 0.0);
    f.lambda.assign(s.nodes.size(), 0.0);
    f.edge_flow.assign(s.edges.size(), 0.0);

    for (int i : s.layer_nodes[0]) {
        f.phi[static_cast<size_t>(i)] = s.nodes[static_cast<size_t>(i)].arrival_rate;
        f.Phi += s.nodes[static_cast<size_t>(i)].arrival_rate;
    }
    for (int h = 0; h < H; ++h) {
        double keep = survival[static_cast<size_t>(h)];
        double alpha_next = s.stage(h + 1).alpha;
        for (int i : s.layer_nodes[static_cast<size_t>(h)]) {
            const auto& out = s.successors[static_cast<size_t>(i)];
            const auto& row = p.rows.at(static_cast<size_t>(i));
            if (row.size() != out.size())
                throw DomainError("strategy row size mismatch at node " +
                                  s.nodes[static_cast<size_t>(i)].id);
            for (size_t k = 0; k < out.size(); ++k) {
                int e = out[k];
                double rate = row[k] * f.phi[static_cast<size_t>(i)] * keep;
                f.edge_flow[static_cast<size_t>(e)] = rate;
                int j = s.edges[static_cast<size_t>(e)].to;
                f.phi[static_cast<size_t>(j)] += rate;
                f.lambda[static_cast<size_t>(j)] += rate * alpha_next;
            }
        }
    }
    return f;
}

double transfer_delay(const Scenario& s, int edge, const FlowState&) {
    const Edge& e = s.edges.at(static_cast<size_t>(edge));
    int layer_to = s.nodes[static_cast<size_t>(e.to)].layer;
    return s.stage(layer_to).beta / e.rate;
}

double compute_delay(const Scenario& s, int node, const FlowState& flow, bool strict) {
    const NodeSpec& nd = s.nodes.at(static_cast<size_t>(node));
    if (nd.layer < 1) throw DomainError("compute delay requested for a source node");
    double lam = flow.lambda[static_cast<size_t>(node)];
    double alpha = s.stage(nd.layer).alpha;
    if (strict) {
        if (lam >= nd.mu)
            throw SaturatedError("node " + nd.id + " saturated: lambda " + fmt6(lam) + " >= mu " +
                                 fmt6(nd.mu));
        return alpha / (nd.mu - lam);
    }
    double clamped = std::min(lam, nd.mu - s.params.epsilon);
    return alpha / (nd.mu - clamped);
}

namespace {

// Traffic-weighted delay; work rates optionally clamped at mu - epsilon.
double delay_from_flow(const Scenario& s, const FlowState& f, bool strict) {
    if (f.Phi <= 0.0) throw DomainError("system delay undefined without task arrivals");
    const int H = s.depth();
    double acc = 0.0;
    for (int h = 1; h <= H; ++h) {
        for (int j : s.layer_nodes[static_cast<size_t>(h)]) {
            const NodeSpec& nd = s.nodes[static_cast<size_t>(j)];
            double lam = f.lambda[static_cast<size_t>(j)];
            if (strict && lam >= nd.mu)
                throw SaturatedError("node " + nd.id + " saturated: lambda " + fmt6(lam) +
                                     " >= mu " + fmt6(nd.mu));
            double eff = strict ? lam : std::min(lam, nd.mu - s.params.epsilon);
            acc += eff / (nd.mu - eff);
            double beta = s.stage(h).beta;
            for (int e : s.predecessors[static_cast<size_t>(j)])
                acc += f.edge_flow[static_cast<size_t>(e)] * beta /
                       s.edges[static_cast<size_t>(e)].rate;
        }
    }
    return acc / f.Phi;
}

} // namespace

double system_delay(const Scenario& s, const Strategy& p, const std::vector<double>& survival) {
    FlowState f = propagate_flows(s, p, survival);
    return delay_from_flow(s, f, true);
}

double penalty(const Scenario& s, const FlowState& flow) {
    double acc = 0.0;
    for (size_t j = 0; j < s.nodes.size(); ++j) {
        if (s.nodes[j].layer < 1) continue;
        double over = flow.lambda[j] - s.nodes[j].mu + s.params.epsilon;
        if (over > 0.0) acc += over * over;
    }
    return s.params.K * acc;
}

Objective objective_R(const Scenario& s, const Strategy& p, const std::vector<double>& survival) {
    FlowState f = propagate_flows(s, p, survival);
    Objective o;
    o.T = delay_from_flow(s, f, false);
    o.N = penalty(s, f);
    o.R = o.T + o.N;
    return o;
}

double utility_U(double T, double accuracy, double a, const AccuracyBounds& bounds) {
    double range = bounds.a_max - bounds.a_min;
    if (range <= 0.0) throw DomainError("utility undefined for a flat accuracy range");
    return a * T - (1.0 - a) * (accuracy - bounds.a_min) / range;
}

double repulsive_factor(double mu, double lambda, double alpha_next, double beta_next, double rate,
                        double omega_next, double K, double Phi, double epsilon) {
    double clamped = std::min(lambda, mu - epsilon);
    double gap = mu - clamped;
    double queue_curvature = mu * alpha_next / (gap * gap);
    double violation = std::max(0.0, alpha_next * (lambda - mu + epsilon));
    return queue_curvature + beta_next / rate + omega_next + 2.0 * K * Phi * violation;
}

GradientField compute_gradients(const Scenario& s, const Strategy& p,
                                const std::vector<double>& survival) {
    return compute_gradients(s, p, survival, propagate_flows(s, p, survival));
}

GradientField compute_gradients(const Scenario& s, const Strategy& p,
                                const std::vector<double>& survival, const FlowState& flow) {
    check_survival(s, survival);
    const int H = s.depth();
    GradientField g;
    g.delta.assign(s.edges.size(), 0.0);
    g.omega.assign(s.nodes.size(), 0.0);
    g.dR_dp.assign(s.edges.size(), 0.0);

    // Single backward sweep: edges into layer h+1 need omega at their target,
    // which only depends on deeper layers.
    for (int h = H - 1; h >= 0; --h) {
        double keep = survival[static_cast<size_t>(h)];
        double alpha_next = s.stage(h + 1).alpha;
        double beta_next = s.stage(h + 1).beta;
        for (int i : s.layer_nodes[static_cast<size_t>(h)]) {
            const auto& out = s.successors[static_cast<size_t>(i)];
            const auto& row = p.rows.at(static_cast<size_t>(i));
            double omega_acc = 0.0;
            for (size_t k = 0; k < out.size(); ++k) {
                int e = out[k];
                int j = s.edges[static_cast<size_t>(e)].to;
                const NodeSpec& recv = s.nodes[static_cast<size_t>(j)];
                double d = repulsive_factor(recv.mu, flow.lambda[static_cast<size_t>(j)],
                                            alpha_next, beta_next,
                                            s.edges[static_cast<size_t>(e)].rate,
                                            g.omega[static_cast<size_t>(j)], s.params.K, flow.Phi,
                                            s.params.epsilon);
                g.delta[static_cast<size_t>(e)] = d;
                g.dR_dp[static_cast<size_t>(e)] =
                    flow.phi[static_cast<size_t>(i)] * keep / flow.Phi * d;
                omega_acc += row[k] * keep * d;
            }
            g.omega[static_cast<size_t>(i)] = omega_acc;
        }
    }
    return g;
}

double fd_gradient_oracle(const Scenario& s, const Strategy& p, const std::vector<double>& survival,
                          int edge, double step) {
    const Edge& e = s.edges.at(static_cast<size_t>(edge));
    size_t slot = 0;
    const auto& out = s.successors[static_cast<size_t>(e.from)];
    for (size_t k = 0; k < out.size(); ++k)
        if (out[k] == edge) slot = k;

    Strategy hi = p, lo = p;
    hi.rows[static_cast<size_t>(e.from)][slot] += step;
    lo.rows[static_cast<size_t>(e.from)][slot] -= step;
    double r_hi = objective_R(s, hi, survival).R;
    double r_lo = objective_R(s, lo, survival).R;
    return (r_hi - r_lo) / (2.0 * step);
}

double delta_delay_estimate(double phi, double Phi, double surviving, double surviving_new,
                            double omega) {
    if (surviving <= 0.0) throw DomainError("dead branch: surviving ratio is zero");
    return phi / Phi * ((surviving_new - surviving) / surviving) * omega;
}

double delta_utility(double a, double dD_total, double dA_normalized) {
    return a * dD_total - (1.0 - a) * dA_normalized;
}

ThresholdImpact threshold_impact(const Scenario& s, const std::vector<double>& survival,
                                 const FlowState& flow, const GradientField& grads,
                                 int branch_layer, double surviving_new, double dA_normalized,
                                 double a) {
    check_survival(s, survival);
    if (branch_layer < 1 || branch_layer >= s.depth())
        throw DomainError("branch layer outside 1..H-1");
    double keep = survival[static_cast<size_t>(branch_layer)];
    ThresholdImpact out;
    for (int i : s.layer_nodes[static_cast<size_t>(branch_layer)]) {
        double dd = delta_delay_estimate(flow.phi[static_cast<size_t>(i)], flow.Phi, keep,
                                         surviving_new, grads.omega[static_cast<size_t>(i)]);
        out.dD_per_node.push_back(dd);
        out.dD_total += dd;
    }
    out.dU = delta_utility(a, out.dD_total, dA_normalized);
    return out;
}

ThresholdImpact threshold_impact(const Scenario& s, const Strategy& p,
                                 const std::vector<double>& survival, int branch_layer,
                                 double surviving_new, double dA_normalized, double a) {
    FlowState flow = propagate_flows(s, p, survival);
    GradientField grads = compute_gradients(s, p, survival, flow);
    return threshold_impact(s, survival, flow, grads, branch_layer, surviving_new, dA_normalized, a);
}

} // namespace epo
