#include <cmath>
#include <vector>

#include "doctest.h"

#include "epo/analytics.hpp"
#include "epo/errors.hpp"
#include "epo/model.hpp"
#include "fixtures.hpp"

using namespace epo;
using fixtures::chain_doc;
using fixtures::fan_doc;
using nlohmann::json;

namespace {

std::vector<double> no_exits(int layers) {
    return std::vector<double>(size_t(layers) + 1, 1.0);
}

} // namespace

TEST_CASE("flows chain through surviving ratios and work demands") {
    // Source at 4 tasks/s, half the tasks exit after layer 1, alpha = (2, 1).
    Scenario s = fixtures::load(chain_doc(4.0, {2.0, 1.0}, {0.1, 0.1}, {100.0, 100.0}));
    Strategy p = uniform_strategy(s);
    std::vector<double> survival = {1.0, 0.5, 1.0};
    FlowState f = propagate_flows(s, p, survival);

    CHECK(f.Phi == doctest::Approx(4.0));
    CHECK(f.phi[s.node_index("s1")] == doctest::Approx(4.0));
    CHECK(f.lambda[s.node_index("s1")] == doctest::Approx(8.0));
    CHECK(f.phi[s.node_index("s2")] == doctest::Approx(2.0));
    CHECK(f.lambda[s.node_index("s2")] == doctest::Approx(2.0));
    REQUIRE(f.edge_flow.size() == 2);
    CHECK(f.edge_flow[0] == doctest::Approx(4.0));
    CHECK(f.edge_flow[1] == doctest::Approx(2.0));
}

TEST_CASE("an even split halves the work at each receiver") {
    Scenario s = fixtures::load(fan_doc(10.0, 2.21, 0.14, {100.0, 100.0}, {1.4, 1.4}));
    FlowState f = propagate_flows(s, uniform_strategy(s), no_exits(1));
    CHECK(f.lambda[s.node_index("s1")] == doctest::Approx(11.05));
    CHECK(f.lambda[s.node_index("s2")] == doctest::Approx(11.05));
}

TEST_CASE("flow conservation holds on random-ish splits") {
    Scenario s = fixtures::load(fan_doc(6.0, 1.5, 0.2, {60.0, 80.0, 40.0}, {4.0, 6.0, 8.0}));
    Strategy p = uniform_strategy(s);
    p.rows[0] = {0.2, 0.5, 0.3};
    FlowState f = propagate_flows(s, p, no_exits(1));
    double in = 0.0;
    for (int e : s.successors[0]) in += f.edge_flow[size_t(e)];
    CHECK(in == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("transfer delay is stage input size over link rate") {
    Scenario s = fixtures::load(chain_doc(1.0, {1.0, 1.0}, {0.1, 0.77}, {50.0, 50.0}, 10.0, 7.7));
    FlowState f = propagate_flows(s, uniform_strategy(s), no_exits(2));
    CHECK(transfer_delay(s, 1, f) == doctest::Approx(0.1)); // 0.77 MB over 7.7 MB/s
}

TEST_CASE("processor-sharing sojourn matches alpha over residual capacity") {
    Scenario s = fixtures::load(chain_doc(4.0, {2.21}, {0.14}, {10.0}, 1.4));
    Strategy p = uniform_strategy(s);
    FlowState f = propagate_flows(s, p, no_exits(1));
    int j = s.node_index("s1");
    CHECK(f.lambda[j] == doctest::Approx(8.84));
    CHECK(compute_delay(s, j, f, true) == doctest::Approx(2.21 / (10.0 - 8.84)).epsilon(1e-12));

    // An idle server still charges one service time.
    Scenario idle = fixtures::load(chain_doc(0.0, {2.21}, {0.14}, {10.0}, 1.4));
    FlowState fi = propagate_flows(idle, uniform_strategy(idle), no_exits(1));
    CHECK(compute_delay(idle, idle.node_index("s1"), fi, true) == doctest::Approx(0.221));
}

TEST_CASE("mean response delay matches the hand-computed chain value") {
    Scenario s = fixtures::load(chain_doc(4.0, {2.21}, {0.14}, {10.0}, 1.4));
    Strategy p = uniform_strategy(s);
    double T = system_delay(s, p, no_exits(1));
    // (8.84/(10-8.84) + 4*(0.14/1.4)) / 4
    CHECK(T == doctest::Approx(2.005172413793103).epsilon(1e-12));

    Objective o = objective_R(s, p, no_exits(1));
    CHECK(o.N == 0.0);
    CHECK(o.T == doctest::Approx(T).epsilon(1e-12));
    CHECK(o.R == doctest::Approx(T).epsilon(1e-12));
}

TEST_CASE("strict evaluation refuses saturated servers") {
    Scenario s = fixtures::load(chain_doc(10.0, {1.0}, {0.1}, {5.0}));
    CHECK_THROWS_AS(system_delay(s, uniform_strategy(s), no_exits(1)), SaturatedError);
}

TEST_CASE("penalty activates exactly on the capacity margin") {
    json doc = chain_doc(10.5, {1.0}, {0.1}, {10.0});
    doc["params"] = {{"epsilon", 0.01}, {"K", 1e6}};
    Scenario s = fixtures::load(doc);
    Strategy p = uniform_strategy(s);
    FlowState f = propagate_flows(s, p, no_exits(1));
    CHECK(penalty(s, f) == doctest::Approx(260100.0).epsilon(1e-9));

    Objective o = objective_R(s, p, no_exits(1));
    CHECK(o.N == doctest::Approx(260100.0).epsilon(1e-9));
    CHECK(o.R == doctest::Approx(o.T + o.N).epsilon(1e-12));
    CHECK(std::isfinite(o.R));

    // Just inside the margin: no penalty.
    json ok = chain_doc(9.8, {1.0}, {0.1}, {10.0});
    ok["params"] = {{"epsilon", 0.01}, {"K", 1e6}};
    Scenario s2 = fixtures::load(ok);
    FlowState f2 = propagate_flows(s2, uniform_strategy(s2), no_exits(1));
    CHECK(penalty(s2, f2) == 0.0);
}

TEST_CASE("penalties add across violating servers") {
    json doc = fan_doc(21.0, 1.0, 0.1, {10.0, 10.0}, {5.0, 5.0});
    doc["params"] = {{"epsilon", 0.01}, {"K", 1e6}};
    Scenario s = fixtures::load(doc);
    FlowState f = propagate_flows(s, uniform_strategy(s), no_exits(1));
    CHECK(penalty(s, f) == doctest::Approx(2.0 * 260100.0).epsilon(1e-9));
}

TEST_CASE("utility blends delay against normalized accuracy") {
    AccuracyBounds b{0.470, 0.681};
    CHECK(utility_U(0.37, 0.5, 1.0, b) == doctest::Approx(0.37));
    CHECK(utility_U(0.37, 0.681, 0.0, b) == doctest::Approx(-1.0));
    double expect = 0.5 * 0.2 - 0.5 * (0.6 - 0.470) / (0.681 - 0.470);
    CHECK(utility_U(0.2, 0.6, 0.5, b) == doctest::Approx(expect).epsilon(1e-12));

    AccuracyBounds flat{0.9, 0.9};
    CHECK_THROWS_AS(utility_U(0.2, 0.9, 0.5, flat), DomainError);
}

TEST_CASE("repulsive factor combines curvature, transfer and downstream cost") {
    // mu=10, lambda=6, next stage alpha=2, beta=0.5 over rate 5, no tail.
    double d = repulsive_factor(10.0, 6.0, 2.0, 0.5, 5.0, 0.0, 1e6, 1.0, 0.1);
    CHECK(d == doctest::Approx(10.0 * 2.0 / 16.0 + 0.1).epsilon(1e-12));

    // Downstream cost enters additively.
    double d2 = repulsive_factor(10.0, 6.0, 2.0, 0.5, 5.0, 0.675, 1e6, 1.0, 0.1);
    CHECK(d2 == doctest::Approx(d + 0.675).epsilon(1e-12));
}

TEST_CASE("gradient field matches finite differences on a heterogeneous fan") {
    Scenario s = fixtures::load(fan_doc(5.0, 1.8, 0.3, {20.0, 35.0, 15.0}, {3.0, 7.0, 5.0}));
    Strategy p = uniform_strategy(s);
    p.rows[0] = {0.3, 0.5, 0.2};
    auto survival = no_exits(1);
    GradientField g = compute_gradients(s, p, survival);
    for (size_t e = 0; e < s.edges.size(); ++e) {
        double fd = fd_gradient_oracle(s, p, survival, int(e), 1e-6);
        CHECK(g.dR_dp[e] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("halving the difference step shrinks its error fourfold") {
    Scenario s = fixtures::load(fan_doc(5.0, 1.8, 0.3, {20.0, 35.0}, {3.0, 7.0}));
    Strategy p = uniform_strategy(s);
    p.rows[0] = {0.6, 0.4};
    auto survival = no_exits(1);
    GradientField g = compute_gradients(s, p, survival);
    double e1 = std::abs(fd_gradient_oracle(s, p, survival, 0, 2e-3) - g.dR_dp[0]);
    double e2 = std::abs(fd_gradient_oracle(s, p, survival, 0, 1e-3) - g.dR_dp[0]);
    REQUIRE(e1 > 0.0);
    REQUIRE(e2 > 0.0);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.25)); // second-order scheme
}

TEST_CASE("idle sources contribute zero derivative") {
    json doc = fan_doc(2.0, 1.0, 0.1, {50.0, 50.0}, {5.0, 5.0});
    doc["nodes"].push_back({{"id", "d1"}, {"layer", 0}, {"arrival_rate", 0.0}});
    doc["links"].push_back({{"from", "d1"}, {"to", "s1"}, {"rate", 5.0}});
    doc["links"].push_back({{"from", "d1"}, {"to", "s2"}, {"rate", 5.0}});
    Scenario s = fixtures::load(doc);
    Strategy p = uniform_strategy(s);
    GradientField g = compute_gradients(s, p, no_exits(1));
    int d1 = s.node_index("d1");
    for (int e : s.successors[size_t(d1)]) {
        CHECK(g.dR_dp[size_t(e)] == 0.0);
        CHECK(fd_gradient_oracle(s, p, no_exits(1), e, 1e-6) == doctest::Approx(0.0));
    }
}

TEST_CASE("derivatives factor as traffic share times repulsive factor") {
    Scenario s = fixtures::load(chain_doc(4.0, {2.0, 1.0}, {0.1, 0.2}, {100.0, 90.0}));
    Strategy p = uniform_strategy(s);
    std::vector<double> survival = {1.0, 0.5, 1.0};
    FlowState f = propagate_flows(s, p, survival);
    GradientField g = compute_gradients(s, p, survival);
    for (size_t e = 0; e < s.edges.size(); ++e) {
        int from = s.edges[e].from;
        int layer = s.nodes[size_t(from)].layer;
        double share = f.phi[size_t(from)] * survival[size_t(layer)] / f.Phi;
        CHECK(g.dR_dp[e] == doctest::Approx(share * g.delta[e]).epsilon(1e-12));
    }
}

TEST_CASE("downstream cost accumulates along a chain") {
    Scenario s = fixtures::load(chain_doc(4.0, {2.0, 1.0}, {0.1, 0.2}, {100.0, 90.0}));
    Strategy p = uniform_strategy(s);
    std::vector<double> survival = {1.0, 0.5, 1.0};
    GradientField g = compute_gradients(s, p, survival);
    int s1 = s.node_index("s1");
    int s2 = s.node_index("s2");
    CHECK(g.omega[size_t(s2)] == 0.0); // terminal layer
    // Single successor with probability 1: omega = survival * delta.
    CHECK(g.omega[size_t(s1)] == doctest::Approx(0.5 * g.delta[1]).epsilon(1e-12));
}

TEST_CASE("first-order delay shift from a survival change matches the worked value") {
    CHECK(delta_delay_estimate(4.0, 4.0, 0.5, 0.4, 0.675) == doctest::Approx(-0.135).epsilon(1e-12));
    CHECK(delta_delay_estimate(4.0, 4.0, 0.5, 0.5, 0.675) == 0.0);
    CHECK_THROWS_AS(delta_delay_estimate(4.0, 4.0, 0.0, 0.1, 0.675), DomainError);
}

TEST_CASE("utility shift weighs delay against accuracy movement") {
    CHECK(delta_utility(0.5, -0.135, -0.02) == doctest::Approx(-0.0575).epsilon(1e-12));
    // No delay change: pure accuracy term.
    CHECK(delta_utility(0.25, 0.0, 0.04) == doctest::Approx(-0.75 * 0.04).epsilon(1e-12));
}

TEST_CASE("threshold impact aggregates per-node delay shifts") {
    json doc = chain_doc(4.0, {2.0, 1.0}, {0.1, 0.2}, {100.0, 90.0}, 10.0, 20.0, {1});
    doc["exit_table"] = fixtures::table_doc({1}, 2);
    Scenario s = fixtures::load(doc);
    Strategy p = uniform_strategy(s);
    std::vector<double> survival = {1.0, 0.5, 1.0};

    ThresholdImpact ti = threshold_impact(s, p, survival, 1, 0.4, -0.02, 0.5);
    double total = 0.0;
    for (double v : ti.dD_per_node) total += v;
    CHECK(ti.dD_total == doctest::Approx(total).epsilon(1e-12));
    CHECK(ti.dD_total < 0.0); // shedding load downstream lowers delay
    CHECK(ti.dU == doctest::Approx(delta_utility(0.5, ti.dD_total, -0.02)).epsilon(1e-12));

    // The flow/gradient-reusing overload agrees with the recomputing one.
    FlowState f = propagate_flows(s, p, survival);
    GradientField g = compute_gradients(s, p, survival, f);
    ThresholdImpact ti2 = threshold_impact(s, survival, f, g, 1, 0.4, -0.02, 0.5);
    CHECK(ti2.dD_total == doctest::Approx(ti.dD_total).epsilon(1e-12));
    CHECK(ti2.dU == doctest::Approx(ti.dU).epsilon(1e-12));
}

TEST_CASE("objective stays finite and penalized beyond capacity") {
    Scenario s = fixtures::load(chain_doc(30.0, {1.0}, {0.1}, {10.0}));
    Objective o = objective_R(s, uniform_strategy(s), no_exits(1));
    CHECK(std::isfinite(o.R));
    CHECK(o.N > 0.0);
    CHECK(o.T > 0.0);
}
