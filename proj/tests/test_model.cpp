#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"

#include "epo/errors.hpp"
#include "epo/model.hpp"
#include "epo/textio.hpp"
#include "fixtures.hpp"

using namespace epo;
using fixtures::chain_doc;
using fixtures::fan_doc;
using nlohmann::json;

TEST_CASE("minimal chain document loads with derived adjacency") {
    Scenario s = fixtures::load(chain_doc(4.0, {2.0}, {0.1}, {100.0}));
    CHECK(s.depth() == 1);
    REQUIRE(s.nodes.size() == 2);
    CHECK(s.nodes[0].id == "d0"); // layer-major order
    CHECK(s.nodes[1].id == "s1");
    REQUIRE(s.edges.size() == 1);
    CHECK(s.successors[0].size() == 1);
    CHECK(s.predecessors[1].size() == 1);
    CHECK(s.layer_nodes[0] == std::vector<int>{0});
    CHECK(s.layer_nodes[1] == std::vector<int>{1});
    // Derived capacity margin: 1% of the slowest server.
    CHECK(s.params.epsilon == doctest::Approx(1.0));
    // Branchless scenarios still carry a usable exit table.
    REQUIRE(s.exit_table);
    CHECK(s.exit_table->a_min == doctest::Approx(1.0));
}

TEST_CASE("nodes are ordered by layer then id regardless of document order") {
    json doc = fan_doc(1.0, 1.0, 0.1, {50.0, 50.0}, {5.0, 5.0});
    std::swap(doc["nodes"][1], doc["nodes"][2]);
    Scenario s = fixtures::load(doc);
    CHECK(s.nodes[1].id == "s1");
    CHECK(s.nodes[2].id == "s2");
}

TEST_CASE("layer-skipping links are rejected at parse time") {
    json doc = chain_doc(1.0, {1.0, 1.0}, {0.1, 0.1}, {50.0, 50.0});
    doc["links"].push_back({{"from", "d0"}, {"to", "s2"}, {"rate", 5.0}});
    CHECK_THROWS_WITH_AS(fixtures::load(doc),
                         "link d0 -> s2 does not join adjacent layers", ParseError);
}

TEST_CASE("unknown fields are rejected, not ignored") {
    json doc = chain_doc(1.0, {1.0}, {0.1}, {50.0});
    doc["extra"] = 1;
    CHECK_THROWS_AS(fixtures::load(doc), ParseError);

    json doc2 = chain_doc(1.0, {1.0}, {0.1}, {50.0});
    doc2["nodes"][0]["typo"] = true;
    CHECK_THROWS_AS(fixtures::load(doc2), ParseError);
}

TEST_CASE("duplicate ids and duplicate links are parse errors") {
    json doc = fan_doc(1.0, 1.0, 0.1, {50.0, 50.0}, {5.0, 5.0});
    doc["nodes"][2]["id"] = "s1";
    CHECK_THROWS_AS(fixtures::load(doc), ParseError);

    json doc2 = chain_doc(1.0, {1.0}, {0.1}, {50.0});
    doc2["links"].push_back({{"from", "d0"}, {"to", "s1"}, {"rate", 7.0}});
    CHECK_THROWS_AS(fixtures::load(doc2), ParseError);
}

TEST_CASE("declared exit branches require an exit table") {
    json doc = chain_doc(1.0, {1.0, 1.0}, {0.1, 0.1}, {50.0, 50.0}, 10.0, 20.0, {1});
    CHECK_THROWS_AS(fixtures::load(doc), ParseError);
    doc["exit_table"] = fixtures::table_doc({1}, 2);
    Scenario s = fixtures::load(doc);
    CHECK(s.exit_table->branch_layers == std::vector<int>{1});
}

TEST_CASE("validation flags structural and parameter problems") {
    json doc = fan_doc(1.0, 1.0, 0.1, {50.0, 50.0}, {5.0, 5.0});
    Scenario ok = fixtures::load(doc);
    CHECK_FALSE(has_errors(validate_scenario(ok)));

    Scenario bad = ok;
    bad.params.a = 1.5;
    CHECK(has_errors(validate_scenario(bad)));

    bad = ok;
    bad.nodes[1].mu = 0.0;
    bad.finalize();
    CHECK(has_errors(validate_scenario(bad)));

    // A server nothing can reach is an error.
    json island = fan_doc(1.0, 1.0, 0.1, {50.0, 50.0}, {5.0, 5.0});
    island["links"].erase(1);
    CHECK(has_errors(validate_scenario(fixtures::load(island))));
}

TEST_CASE("infeasible-without-exits layers produce a warning, not an error") {
    // Demand 10 * 2 = 20 GFLOP/s against capacity 15.
    Scenario s = fixtures::load(chain_doc(10.0, {2.0}, {0.1}, {15.0}));
    auto diags = validate_scenario(s);
    CHECK_FALSE(has_errors(diags));
    bool warned = false;
    for (const auto& d : diags)
        warned |= d.severity == Diagnostic::Severity::Warning &&
                  d.message.find("infeasible") != std::string::npos;
    CHECK(warned);
}

TEST_CASE("round budget overruns of the config phase are warned about") {
    json doc = chain_doc(1.0, {1.0}, {0.1}, {50.0});
    doc["params"] = {{"n", 50}, {"comm_delay_ms", 2.0}, {"config_phase_ms", 100.0}};
    auto diags = validate_scenario(fixtures::load(doc));
    bool warned = false;
    for (const auto& d : diags) warned |= d.message.find("round budget") != std::string::npos;
    CHECK(warned);

    doc["params"]["n"] = 25;
    diags = validate_scenario(fixtures::load(doc));
    for (const auto& d : diags) CHECK(d.message.find("round budget") == std::string::npos);
}

TEST_CASE("scenario survives a json round trip") {
    json doc = chain_doc(4.0, {2.0, 1.0}, {0.2, 0.5}, {40.0, 30.0}, 8.0, 16.0, {1});
    doc["exit_table"] = fixtures::table_doc({1}, 2);
    doc["nodes"][1]["modes"] = {30.0, 40.0, 50.0};
    Scenario s = fixtures::load(doc);
    Scenario back = fixtures::load(json::parse(scenario_to_json(s).dump()));
    CHECK(back == s);
    CHECK(back.exit_table->correct_total == s.exit_table->correct_total);
}

TEST_CASE("uniform strategy rows sum to exactly one") {
    json doc = fan_doc(1.0, 1.0, 0.1, {50.0, 50.0, 50.0}, {5.0, 5.0, 5.0});
    Scenario s = fixtures::load(doc);
    Strategy p = uniform_strategy(s);
    double sum = 0.0;
    for (double v : p.rows[0]) sum += v;
    CHECK(sum == 1.0); // exact, not approximate
    CHECK_FALSE(has_errors(validate_strategy(s, p)));
}

TEST_CASE("strategy validation catches bad rows") {
    Scenario s = fixtures::load(fan_doc(1.0, 1.0, 0.1, {50.0, 50.0}, {5.0, 5.0}));
    Strategy p = uniform_strategy(s);
    p.rows[0] = {0.7, 0.4};
    CHECK(has_errors(validate_strategy(s, p)));
    p.rows[0] = {1.2, -0.2};
    CHECK(has_errors(validate_strategy(s, p)));
    p.rows[0] = {0.5};
    CHECK(has_errors(validate_strategy(s, p)));
}

TEST_CASE("strategy json round trip preserves every probability bit") {
    Scenario s = fixtures::load(fan_doc(1.0, 1.0, 0.1, {50.0, 30.0}, {5.0, 5.0}));
    Strategy p = uniform_strategy(s);
    p.rows[0] = {1.0 / 3.0, 1.0 - 1.0 / 3.0};
    Strategy back = strategy_from_json(s, json::parse(strategy_to_json(s, p).dump()));
    CHECK(back == p);
}

TEST_CASE("threshold json round trip maps through grid values") {
    json doc = chain_doc(1.0, {1.0, 1.0}, {0.1, 0.1}, {50.0, 50.0}, 10.0, 20.0, {1});
    doc["exit_table"] = fixtures::table_doc({1}, 2);
    Scenario s = fixtures::load(doc);
    ThresholdSetting c;
    c.idx = {13};
    ThresholdSetting back = thresholds_from_json(s, json::parse(thresholds_to_json(s, c).dump()));
    CHECK(back == c);
}

TEST_CASE("loading from a file records the sources read") {
    json doc = chain_doc(2.0, {1.0}, {0.1}, {50.0});
    std::string path = "model_roundtrip.tmp.json";
    write_file(path, doc.dump(2));
    Scenario s = load_scenario(path);
    REQUIRE(s.source_files.size() == 1);
    CHECK(s.source_files[0] == path);
    std::remove(path.c_str());
}
