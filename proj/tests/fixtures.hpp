#pragma once

// Shared scenario builders for the test suite.  Everything goes through the
// JSON loader so each fixture also exercises parsing and finalize().

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "epo/exit_profile.hpp"
#include "epo/model.hpp"

namespace fixtures {

using nlohmann::json;

inline epo::Scenario load(const json& doc) {
    return epo::scenario_from_json(doc, ".");
}

// Single chain: one source at rate phi, one server per layer.  Link rates:
// first hop ed_rate, later hops es_rate.
inline json chain_doc(double phi, const std::vector<double>& alpha,
                      const std::vector<double>& beta, const std::vector<double>& mu,
                      double ed_rate = 10.0, double es_rate = 20.0,
                      const std::vector<int>& exits = {}) {
    json doc;
    doc["version"] = 1;
    doc["sub_models"] = json::array();
    for (size_t h = 0; h < alpha.size(); ++h) {
        bool has_exit = false;
        for (int e : exits) has_exit |= (e == int(h) + 1);
        doc["sub_models"].push_back({{"alpha", alpha[h]}, {"beta", beta[h]}, {"has_exit", has_exit}});
    }
    doc["nodes"] = json::array();
    doc["nodes"].push_back({{"id", "d0"}, {"layer", 0}, {"arrival_rate", phi}});
    for (size_t h = 0; h < mu.size(); ++h)
        doc["nodes"].push_back({{"id", "s" + std::to_string(h + 1)}, {"layer", int(h) + 1}, {"mu", mu[h]}});
    doc["links"] = json::array();
    doc["links"].push_back({{"from", "d0"}, {"to", "s1"}, {"rate", ed_rate}});
    for (size_t h = 1; h < mu.size(); ++h)
        doc["links"].push_back({{"from", "s" + std::to_string(h)},
                                {"to", "s" + std::to_string(h + 1)},
                                {"rate", es_rate}});
    if (exits.empty()) doc["exit_table"] = {{"final_accuracy", 1.0}};
    doc["seed"] = 1;
    return doc;
}

// One source fanning out to parallel servers in a depth-1 pipeline.
inline json fan_doc(double phi, double alpha, double beta, const std::vector<double>& mus,
                    const std::vector<double>& rates) {
    json doc;
    doc["version"] = 1;
    doc["sub_models"] = json::array();
    doc["sub_models"].push_back({{"alpha", alpha}, {"beta", beta}, {"has_exit", false}});
    doc["nodes"] = json::array();
    doc["nodes"].push_back({{"id", "d0"}, {"layer", 0}, {"arrival_rate", phi}});
    doc["links"] = json::array();
    for (size_t k = 0; k < mus.size(); ++k) {
        std::string id = "s" + std::to_string(k + 1);
        doc["nodes"].push_back({{"id", id}, {"layer", 1}, {"mu", mus[k]}});
        doc["links"].push_back({{"from", "d0"}, {"to", id}, {"rate", rates[k]}});
    }
    doc["exit_table"] = {{"final_accuracy", 1.0}};
    doc["seed"] = 1;
    return doc;
}

// Exit table synthesized from the standard difficulty profile.
inline json table_doc(const std::vector<int>& branch_layers, int final_layer,
                      uint64_t seed = 5, int64_t n = 300) {
    auto prof = epo::default_synth_profile(branch_layers, final_layer);
    auto recs = epo::synthesize_records(seed, n, prof);
    return epo::table_to_json(epo::build_exit_table(recs));
}

// Three samples, one branch at layer 1 of a depth-2 pipeline:
//   confidences 0.9 / 0.3 / 0.6, branch-correct only the first,
//   finally correct the first two.
inline epo::BranchRecordSet three_sample_records() {
    epo::BranchRecordSet r;
    r.branch_layers = {1};
    r.final_layer = 2;
    r.confidence = {{0.9}, {0.3}, {0.6}};
    r.correct = {{1}, {0}, {0}};
    r.final_correct = {1, 1, 0};
    return r;
}

} // namespace fixtures
