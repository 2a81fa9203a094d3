#include <cmath>
#include <vector>

#include "doctest.h"

#include "epo/analytics.hpp"
#include "epo/baselines.hpp"
#include "epo/dto.hpp"
#include "epo/model.hpp"
#include "epo/rng.hpp"
#include "fixtures.hpp"

using namespace epo;
using fixtures::chain_doc;
using fixtures::fan_doc;
using nlohmann::json;

namespace {

std::vector<double> no_exits(int layers) {
    return std::vector<double>(size_t(layers) + 1, 1.0);
}

// Two sources, three heterogeneous receivers, comfortably feasible.
Scenario two_source_fan() {
    json doc;
    doc["version"] = 1;
    doc["sub_models"] = {{{"alpha", 1.5}, {"beta", 0.2}, {"has_exit", false}}};
    doc["nodes"] = {{{"id", "d0"}, {"layer", 0}, {"arrival_rate", 2.0}},
                    {{"id", "d1"}, {"layer", 0}, {"arrival_rate", 3.0}},
                    {{"id", "s1"}, {"layer", 1}, {"mu", 8.0}},
                    {{"id", "s2"}, {"layer", 1}, {"mu", 12.0}},
                    {{"id", "s3"}, {"layer", 1}, {"mu", 20.0}}};
    doc["links"] = json::array();
    const char* sources[] = {"d0", "d1"};
    const char* sinks[] = {"s1", "s2", "s3"};
    double rates[2][3] = {{2.0, 5.0, 8.0}, {6.0, 3.0, 4.0}};
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 3; ++k)
            doc["links"].push_back({{"from", sources[i]}, {"to", sinks[k]}, {"rate", rates[i][k]}});
    doc["exit_table"] = {{"final_accuracy", 1.0}};
    doc["seed"] = 1;
    return fixtures::load(doc);
}

// A source's own expected per-task cost under the selfish model: transfer
// plus receiver sojourn with everyone else's load held fixed.
double own_cost(const Scenario& s, const Strategy& p, int source, const std::vector<double>& row) {
    FlowState f = propagate_flows(s, p, no_exits(s.depth()));
    double alpha = s.stage(1).alpha;
    double beta = s.stage(1).beta;
    double own = f.phi[size_t(source)] * alpha;
    double eps = s.params.epsilon;
    const auto& out = s.successors[size_t(source)];
    double cost = 0.0;
    for (size_t k = 0; k < out.size(); ++k) {
        const Edge& e = s.edges[size_t(out[k])];
        double base = f.lambda[size_t(e.to)] - p.rows[size_t(source)][k] * own;
        double lam = base + row[k] * own;
        double capped = std::min(lam, s.nodes[size_t(e.to)].mu - eps);
        cost += row[k] * (beta / e.rate + alpha / (s.nodes[size_t(e.to)].mu - capped));
    }
    return cost;
}

std::vector<double> random_row(Rng& rng, size_t n) {
    std::vector<double> row(n);
    double total = 0.0;
    for (double& v : row) {
        v = -std::log(1.0 - rng.uniform()) + 1e-6;
        total += v;
    }
    for (double& v : row) v /= total;
    return row;
}

} // namespace

TEST_CASE("capacity-first splits proportionally to receiver speed") {
    Scenario s = fixtures::load(fan_doc(4.0, 1.0, 0.1, {10.0, 30.0}, {5.0, 5.0}));
    Strategy p = cf_strategy(s);
    CHECK(p.rows[0][0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(p.rows[0][1] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(p.rows[0][0] + p.rows[0][1] == 1.0);
    CHECK_FALSE(has_errors(validate_strategy(s, p)));
}

TEST_CASE("bandwidth-first splits proportionally to link rate") {
    Scenario s = fixtures::load(fan_doc(4.0, 1.0, 0.1, {20.0, 20.0}, {2.0, 8.0}));
    Strategy p = bf_strategy(s);
    CHECK(p.rows[0][0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(p.rows[0][1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(p.rows[0][0] + p.rows[0][1] == 1.0);
}

TEST_CASE("static splits ignore load, server rows included") {
    Scenario s = fixtures::load(chain_doc(2.0, {1.0, 1.0}, {0.1, 0.1}, {20.0, 20.0}));
    Strategy p = cf_strategy(s);
    CHECK(p.rows[0] == std::vector<double>{1.0});
    CHECK(p.rows[1] == std::vector<double>{1.0});
    CHECK(p.rows[2].empty()); // terminal layer
}

TEST_CASE("selfish best response balances identical receivers evenly") {
    Scenario s = fixtures::load(fan_doc(4.0, 1.0, 0.1, {10.0, 10.0}, {5.0, 5.0}));
    NgtoResult res = ngto_solve(s, no_exits(1));
    CHECK(res.converged);
    CHECK(res.strategy.rows[0][0] == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(res.strategy.rows[0][1] == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("selfish best response favors the dominant receiver") {
    Scenario s = fixtures::load(fan_doc(4.0, 1.0, 0.1, {10.0, 30.0}, {5.0, 5.0}));
    NgtoResult res = ngto_solve(s, no_exits(1));
    CHECK(res.strategy.rows[0][1] > res.strategy.rows[0][0]);
    CHECK_FALSE(has_errors(validate_strategy(s, res.strategy)));
}

TEST_CASE("no source can improve on its equilibrium row") {
    Scenario s = two_source_fan();
    NgtoResult res = ngto_solve(s, no_exits(1));
    REQUIRE(res.converged);
    Rng rng(2024);
    for (int source : s.layer_nodes[0]) {
        double at_eq = own_cost(s, res.strategy, source, res.strategy.rows[size_t(source)]);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> alt = random_row(rng, res.strategy.rows[size_t(source)].size());
            double c = own_cost(s, res.strategy, source, alt);
            CHECK(at_eq <= c + 1e-3 * (1.0 + c));
        }
    }
}

TEST_CASE("cooperative optimization is never worse than the selfish equilibrium") {
    Scenario s = two_source_fan();
    json doc = scenario_to_json(s);
    doc["params"]["n"] = 1500;
    doc["params"]["tau_p"] = 0.1;
    Scenario tuned = fixtures::load(doc);

    NgtoResult ngto = ngto_solve(tuned, no_exits(1));
    double r_ngto = objective_R(tuned, ngto.strategy, no_exits(1)).R;

    ConfigResult dto =
        run_config_phase(tuned, uniform_strategy(tuned), tuned.exit_table->max_setting(), true);
    double r_dto = objective_R(tuned, dto.strategy, no_exits(1)).R;

    CHECK(r_dto <= r_ngto + 1e-4 * r_ngto + 1e-9);
}

TEST_CASE("path search on a single chain returns the only path") {
    Scenario s = fixtures::load(chain_doc(2.0, {1.0, 1.0}, {0.1, 0.1}, {20.0, 20.0}));
    GaResult res = ga_solve(s, no_exits(2), 7);
    REQUIRE(res.paths.size() == 1);
    CHECK(res.paths[0] == std::vector<int>{s.node_index("s1"), s.node_index("s2")});
    CHECK(res.strategy.rows[0] == std::vector<double>{1.0});
    CHECK(res.strategy.rows[1] == std::vector<double>{1.0});
}

TEST_CASE("path search picks the faster of two receivers") {
    Scenario s = fixtures::load(fan_doc(1.0, 1.0, 0.1, {5.0, 50.0}, {5.0, 5.0}));
    GaResult res = ga_solve(s, no_exits(1), 7);
    CHECK(res.paths[0][0] == s.node_index("s2"));
    CHECK(res.strategy.rows[0][1] == 1.0);
    CHECK(res.strategy.rows[0][0] == 0.0);
}

TEST_CASE("source rows are one-hot and server rows are flow shares") {
    json doc;
    doc["version"] = 1;
    doc["sub_models"] = {{{"alpha", 1.0}, {"beta", 0.1}, {"has_exit", false}},
                         {{"alpha", 1.0}, {"beta", 0.2}, {"has_exit", false}}};
    doc["nodes"] = {{{"id", "d0"}, {"layer", 0}, {"arrival_rate", 2.0}},
                    {{"id", "d1"}, {"layer", 0}, {"arrival_rate", 2.0}},
                    {{"id", "s1a"}, {"layer", 1}, {"mu", 20.0}},
                    {{"id", "s1b"}, {"layer", 1}, {"mu", 20.0}},
                    {{"id", "s2a"}, {"layer", 2}, {"mu", 20.0}},
                    {{"id", "s2b"}, {"layer", 2}, {"mu", 20.0}}};
    doc["links"] = json::array();
    for (const char* d : {"d0", "d1"})
        for (const char* m : {"s1a", "s1b"})
            doc["links"].push_back({{"from", d}, {"to", m}, {"rate", 5.0}});
    for (const char* m : {"s1a", "s1b"})
        for (const char* t : {"s2a", "s2b"})
            doc["links"].push_back({{"from", m}, {"to", t}, {"rate", 10.0}});
    doc["exit_table"] = {{"final_accuracy", 1.0}};
    doc["seed"] = 1;
    Scenario s = fixtures::load(doc);

    GaResult res = ga_solve(s, no_exits(2), 11);
    CHECK_FALSE(has_errors(validate_strategy(s, res.strategy)));
    for (int src : s.layer_nodes[0]) {
        double sum = 0.0;
        for (double v : res.strategy.rows[size_t(src)]) {
            CHECK((v == 0.0 || v == 1.0));
            sum += v;
        }
        CHECK(sum == 1.0);
    }
    for (int mid : s.layer_nodes[1]) {
        double sum = 0.0;
        for (double v : res.strategy.rows[size_t(mid)]) sum += v;
        CHECK(sum == 1.0); // residual-exact
    }
}

TEST_CASE("elitism keeps the best fitness non-increasing across generations") {
    Scenario s = two_source_fan();
    GaResult res = ga_solve(s, no_exits(1), 13);
    for (const auto& history : res.best_fitness_history) {
        REQUIRE_FALSE(history.empty());
        for (size_t g = 1; g < history.size(); ++g) CHECK(history[g] <= history[g - 1] + 1e-12);
    }
}

TEST_CASE("identical seeds reproduce the search bit for bit") {
    Scenario s = two_source_fan();
    GaResult a = ga_solve(s, no_exits(1), 99);
    GaResult b = ga_solve(s, no_exits(1), 99);
    CHECK(a.strategy == b.strategy);
    CHECK(a.paths == b.paths);
    CHECK(a.best_fitness_history == b.best_fitness_history);

    GaResult c = ga_solve(s, no_exits(1), 100);
    bool differs = !(c.paths == a.paths) || !(c.strategy == a.strategy);
    (void)differs; // different seeds may legitimately coincide on tiny instances
}

TEST_CASE("stale planning information causes herding onto the same server") {
    json doc;
    doc["version"] = 1;
    doc["sub_models"] = {{{"alpha", 2.0}, {"beta", 0.1}, {"has_exit", false}}};
    doc["nodes"] = {{{"id", "d0"}, {"layer", 0}, {"arrival_rate", 2.0}},
                    {{"id", "d1"}, {"layer", 0}, {"arrival_rate", 2.0}},
                    {{"id", "s1"}, {"layer", 1}, {"mu", 10.0}},
                    {{"id", "s2"}, {"layer", 1}, {"mu", 10.5}}};
    doc["links"] = json::array();
    for (const char* d : {"d0", "d1"})
        for (const char* t : {"s1", "s2"})
            doc["links"].push_back({{"from", d}, {"to", t}, {"rate", 5.0}});
    doc["exit_table"] = {{"final_accuracy", 1.0}};
    doc["seed"] = 1;
    Scenario s = fixtures::load(doc);

    BaselineConfig stale;
    stale.ga_stale_info = true;
    GaResult herd = ga_solve(s, no_exits(1), 3, stale);
    CHECK(herd.paths[0][0] == s.node_index("s2"));
    CHECK(herd.paths[1][0] == s.node_index("s2")); // both chase the same snapshot

    GaResult fresh = ga_solve(s, no_exits(1), 3);
    CHECK(fresh.paths[0][0] != fresh.paths[1][0]); // the second source dodges
}
