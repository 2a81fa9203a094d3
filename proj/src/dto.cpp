#include "epo/dto.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "epo/errors.hpp"
#include "epo/textio.hpp"

namespace epo {

RoundState init_round_state(const Scenario& s, const Strategy& p0, const ThresholdSetting& c0) {
    RoundState st;
    st.scenario = &s;
    st.p = p0;
    st.c = c0;
    st.survival = layer_survival(*s.exit_table, c0, s.depth());
    st.phi.assign(s.nodes.size(), 0.0);
    st.lambda.assign(s.nodes.size(), 0.0);
    st.omega.assign(s.nodes.size(), 0.0);
    st.delta.assign(s.edges.size(), 0.0);
    st.rur.assign(s.edges.size(), {});
    st.rus.assign(s.edges.size(), {});
    for (int i : s.layer_nodes[0]) {
        st.phi[static_cast<size_t>(i)] = s.nodes[static_cast<size_t>(i)].arrival_rate;
        st.Phi += s.nodes[static_cast<size_t>(i)].arrival_rate;
    }
    return st;
}

void emit_rur(RoundState& st, int node) {
    const Scenario& s = *st.scenario;
    const NodeSpec& nd = s.nodes.at(static_cast<size_t>(node));
    if (nd.layer >= s.depth()) throw DomainError("terminal-layer node cannot offload");
    double keep = st.survival[static_cast<size_t>(nd.layer)];
    double alpha_next = s.stage(nd.layer + 1).alpha;
    const auto& out = s.successors[static_cast<size_t>(node)];
    const auto& row = st.p.rows.at(static_cast<size_t>(node));
    for (size_t k = 0; k < out.size(); ++k) {
        RurMessage& m = st.rur[static_cast<size_t>(out[k])];
        m.xi = row[k] * st.phi[static_cast<size_t>(node)] * keep * alpha_next;
        m.c = st.c;
        m.present = true;
    }
}

void collect_rur(RoundState& st, int node) {
    const Scenario& s = *st.scenario;
    const NodeSpec& nd = s.nodes.at(static_cast<size_t>(node));
    if (nd.layer < 1) throw DomainError("source nodes do not receive work");
    double sum = 0.0;
    for (int e : s.predecessors[static_cast<size_t>(node)]) {
        const RurMessage& m = st.rur[static_cast<size_t>(e)];
        if (!m.present) throw DomainError("missing inbound announcement at node " + nd.id);
        if (!(m.c == st.c)) throw DomainError("threshold synchronization violated at node " + nd.id);
        sum += m.xi;
    }
    st.lambda[static_cast<size_t>(node)] = sum;
    st.phi[static_cast<size_t>(node)] = sum / s.stage(nd.layer).alpha;
}

std::vector<RusMessage> receiver_round(RoundState& st, int node) {
    const Scenario& s = *st.scenario;
    const NodeSpec& nd = s.nodes.at(static_cast<size_t>(node));
    const int H = s.depth();
    if (nd.layer < 1) throw DomainError("source nodes do not broadcast state");

    double omega = 0.0;
    if (nd.layer < H) {
        double keep = st.survival[static_cast<size_t>(nd.layer)];
        double alpha_next = s.stage(nd.layer + 1).alpha;
        double beta_next = s.stage(nd.layer + 1).beta;
        const auto& out = s.successors[static_cast<size_t>(node)];
        const auto& row = st.p.rows.at(static_cast<size_t>(node));
        for (size_t k = 0; k < out.size(); ++k) {
            int e = out[k];
            const RusMessage& m = st.rus[static_cast<size_t>(e)];
            if (!m.present) throw DomainError("missing successor state at node " + nd.id);
            double d = repulsive_factor(m.mu, m.lambda, alpha_next, beta_next,
                                        s.edges[static_cast<size_t>(e)].rate, m.omega,
                                        s.params.K, st.Phi, s.params.epsilon);
            st.delta[static_cast<size_t>(e)] = d;
            omega += row[k] * keep * d;
        }
    }
    st.omega[static_cast<size_t>(node)] = omega;

    std::vector<RusMessage> batch;
    for (int e : s.predecessors[static_cast<size_t>(node)]) {
        RusMessage m;
        m.lambda = st.lambda[static_cast<size_t>(node)];
        m.mu = nd.mu;
        m.omega = omega;
        m.c = st.c;
        m.present = true;
        st.rus[static_cast<size_t>(e)] = m;
        batch.push_back(m);
    }
    return batch;
}

void offloader_round(RoundState& st, int node, double tau) {
    const Scenario& s = *st.scenario;
    const NodeSpec& nd = s.nodes.at(static_cast<size_t>(node));
    if (nd.layer >= s.depth()) throw DomainError("terminal-layer node cannot offload");
    const auto& out = s.successors[static_cast<size_t>(node)];
    auto& row = st.p.rows.at(static_cast<size_t>(node));
    if (out.size() <= 1) return; // single successor keeps probability 1

    double alpha_next = s.stage(nd.layer + 1).alpha;
    double beta_next = s.stage(nd.layer + 1).beta;
    std::vector<double> delta(out.size());
    for (size_t k = 0; k < out.size(); ++k) {
        int e = out[k];
        const RusMessage& m = st.rus[static_cast<size_t>(e)];
        if (!m.present) throw DomainError("missing successor state at node " + nd.id);
        if (!(m.c == st.c)) throw DomainError("threshold synchronization violated at node " + nd.id);
        delta[k] = repulsive_factor(m.mu, m.lambda, alpha_next, beta_next,
                                    s.edges[static_cast<size_t>(e)].rate, m.omega, s.params.K,
                                    st.Phi, s.params.epsilon);
        st.delta[static_cast<size_t>(e)] = delta[k];
    }

    // Successor lists are ordered by id, so the first minimum wins ties.
    size_t best = 0;
    for (size_t k = 1; k < out.size(); ++k)
        if (delta[k] < delta[best]) best = k;

    // Only mass on strictly worse successors moves; exact ties stay put, so
    // a balanced row over identical receivers is a fixed point.
    double shifted = 0.0;
    for (size_t k = 0; k < out.size(); ++k) {
        if (delta[k] > delta[best]) {
            shifted += tau * row[k];
            row[k] *= 1.0 - tau;
        }
    }
    row[best] += shifted;
}

void threshold_round(RoundState& st, int branch_layer) {
    const Scenario& s = *st.scenario;
    const ExitTable& table = *s.exit_table;
    size_t b = table.branch_layers.size();
    for (size_t k = 0; k < table.branch_layers.size(); ++k)
        if (table.branch_layers[k] == branch_layer) b = k;
    if (b == table.branch_layers.size()) return; // no branch at this layer

    double keep = st.survival[static_cast<size_t>(branch_layer)];
    if (keep <= 0.0) throw DomainError("dead branch: no tasks survive layer " +
                                       std::to_string(branch_layer));
    AccuracyBounds bounds = accuracy_bounds(table);
    if (bounds.a_max - bounds.a_min <= 0.0) return; // nothing to trade against delay

    ExitQuery cur = query(table, st.c);
    int gmax = static_cast<int>(table.grids[b].size()) - 1;
    std::vector<int> candidates;
    int down = st.c.idx[b] - s.params.tau_c;
    int up = st.c.idx[b] + s.params.tau_c;
    if (down >= 0) candidates.push_back(down);
    if (up <= gmax && up != st.c.idx[b]) candidates.push_back(up);

    double best_du = 0.0;
    int best_idx = -1;
    for (int cand : candidates) {
        ThresholdSetting cc = st.c;
        cc.idx[b] = cand;
        ExitQuery q = query(table, cc);
        double dA = (q.accuracy - cur.accuracy) / (bounds.a_max - bounds.a_min);
        double dD = 0.0;
        for (int i : s.layer_nodes[static_cast<size_t>(branch_layer)])
            dD += delta_delay_estimate(st.phi[static_cast<size_t>(i)], st.Phi, keep,
                                       q.surviving[b], st.omega[static_cast<size_t>(i)]);
        double dU = delta_utility(s.params.a, dD, dA);
        if (dU < best_du) {
            best_du = dU;
            best_idx = cand;
        }
    }
    if (best_idx >= 0) {
        st.c.idx[b] = best_idx;
        st.survival = layer_survival(table, st.c, s.depth());
    }
}

RoundOutcome run_round(RoundState& st, bool freeze_thresholds) {
    const Scenario& s = *st.scenario;
    const int H = s.depth();

    // Flow wave up the pipeline; announcements are refreshed layer by layer
    // so collected rates are exact for the current strategy.
    for (int h = 1; h <= H; ++h) {
        for (int i : s.layer_nodes[static_cast<size_t>(h - 1)]) emit_rur(st, i);
        for (int j : s.layer_nodes[static_cast<size_t>(h)]) collect_rur(st, j);
    }
    // Cost wave back down.
    for (int h = H; h >= 1; --h)
        for (int j : s.layer_nodes[static_cast<size_t>(h)]) receiver_round(st, j);

    Strategy before = st.p;
    double r_before = objective_R(s, before, st.survival).R;

    RoundOutcome out;
    double tau = s.params.tau_p;
    for (int attempt = 0; attempt < 60; ++attempt) {
        st.p = before;
        for (int h = 0; h < H; ++h)
            for (int i : s.layer_nodes[static_cast<size_t>(h)]) offloader_round(st, i, tau);
        if (!s.params.backtrack) break;
        if (objective_R(s, st.p, st.survival).R <= r_before) break;
        tau *= 0.5;
        st.p = before;
    }
    out.tau_used = tau;
    out.moved = !(st.p == before);

    // Scheduled threshold step, cycling through layers.
    if (!freeze_thresholds && st.round % s.params.m == 0) {
        int h = (st.round / s.params.m) % H;
        if (h >= 1 && s.stage(h).has_exit &&
            st.survival[static_cast<size_t>(h)] > 0.0)
            threshold_round(st, h);
    }
    st.round += 1;
    return out;
}

namespace {

TraceRow make_trace_row(const Scenario& s, const Strategy& p, const ThresholdSetting& c, int round) {
    const ExitTable& table = *s.exit_table;
    std::vector<double> survival = layer_survival(table, c, s.depth());
    Objective o = objective_R(s, p, survival);
    TraceRow row;
    row.round = round;
    row.R = o.R;
    row.T = o.T;
    row.N = o.N;
    AccuracyBounds bounds = accuracy_bounds(table);
    if (bounds.a_max - bounds.a_min > 0.0) {
        row.U = utility_U(o.T, query(table, c).accuracy, s.params.a, bounds);
        row.u_defined = true;
    }
    row.thresholds.assign(static_cast<size_t>(s.depth()), 1.0);
    auto values = table.setting_values(c);
    for (size_t b = 0; b < table.branch_layers.size(); ++b)
        row.thresholds[static_cast<size_t>(table.branch_layers[b]) - 1] = values[b];
    return row;
}

} // namespace

ConfigResult run_config_phase(const Scenario& s, const Strategy& p0, const ThresholdSetting& c0,
                              bool freeze_thresholds) {
    RoundState st = init_round_state(s, p0, c0);
    ConfigResult res;
    res.trace.push_back(make_trace_row(s, st.p, st.c, 0));
    for (int t = 0; t < s.params.n; ++t) {
        Strategy before = st.p;
        run_round(st, freeze_thresholds);
        res.trace.push_back(make_trace_row(s, st.p, st.c, t + 1));
        res.rounds_run = t + 1;
        if (s.params.early_stop) {
            double max_change = 0.0;
            for (size_t i = 0; i < st.p.rows.size(); ++i)
                for (size_t k = 0; k < st.p.rows[i].size(); ++k)
                    max_change = std::max(max_change,
                                          std::abs(st.p.rows[i][k] - before.rows[i][k]));
            if (max_change < 1e-6) {
                res.early_stopped = true;
                break;
            }
        }
    }
    res.strategy = st.p;
    res.thresholds = st.c;
    return res;
}

std::string trace_to_csv(const std::vector<TraceRow>& trace) {
    std::ostringstream out;
    out << "round,R,T,N,U";
    if (!trace.empty())
        for (size_t h = 1; h <= trace[0].thresholds.size(); ++h) out << ",c_" << h;
    out << '\n';
    for (const auto& row : trace) {
        out << row.round << ',' << fmt6(row.R) << ',' << fmt6(row.T) << ',' << fmt6(row.N) << ','
            << (row.u_defined ? fmt6(row.U) : std::string("nan"));
        for (double c : row.thresholds) out << ',' << fmt6(c);
        out << '\n';
    }
    return out.str();
}

} // namespace epo
