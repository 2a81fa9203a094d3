// Regenerates the bundled presets: two pipeline scenarios and their
// confidence-record fixtures.  Output is deterministic, so the committed
// files can always be reproduced byte for byte.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "epo/exit_profile.hpp"
#include "epo/rng.hpp"
#include "epo/textio.hpp"

using epo::Rng;

namespace {

double round1(double x) { return std::round(x * 10.0) / 10.0; }
double round2(double x) { return std::round(x * 100.0) / 100.0; }

struct PresetDef {
    std::string name;
    uint64_t seed = 0;
    std::vector<double> alpha;
    std::vector<double> beta;
    std::vector<int> branch_layers;
    std::vector<int> es_counts;   // servers per layer 1..H
    std::vector<int64_t> counts;  // correct predictions per branch, then final
    int eds = 50;
    int64_t samples = 1000;
};

// Correctness is nested: every sample correct at a branch stays correct at
// all later exits, so the accuracy extremes sit exactly at the grid ends.
// Misclassified samples never report confidence above 0.75, so thresholds at
// or above that level only ever release correct verdicts.
epo::BranchRecordSet make_records(const PresetDef& def) {
    const int64_t n = def.samples;
    epo::BranchRecordSet r;
    r.branch_layers = def.branch_layers;
    r.final_layer = static_cast<int>(def.alpha.size());

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng perm = Rng::substream(def.seed, def.name, "perm");
    for (int64_t i = n - 1; i > 0; --i) {
        int64_t j = static_cast<int64_t>(perm.uniform_int(static_cast<uint64_t>(i + 1)));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    std::vector<int64_t> rank(static_cast<size_t>(n));
    for (int64_t pos = 0; pos < n; ++pos) rank[static_cast<size_t>(order[pos])] = pos;

    Rng conf = Rng::substream(def.seed, def.name, "conf");
    const size_t B = def.branch_layers.size();
    r.confidence.resize(static_cast<size_t>(n));
    r.correct.resize(static_cast<size_t>(n));
    r.final_correct.resize(static_cast<size_t>(n));
    for (int64_t s = 0; s < n; ++s) {
        auto& confs = r.confidence[static_cast<size_t>(s)];
        auto& flags = r.correct[static_cast<size_t>(s)];
        confs.resize(B);
        flags.resize(B);
        for (size_t b = 0; b < B; ++b) {
            bool ok = rank[static_cast<size_t>(s)] < def.counts[b];
            flags[b] = ok ? 1 : 0;
            confs[b] = ok ? conf.uniform(0.40, 0.995) : conf.uniform(0.05, 0.75);
        }
        r.final_correct[static_cast<size_t>(s)] =
            rank[static_cast<size_t>(s)] < def.counts[B] ? 1 : 0;
    }
    return r;
}

nlohmann::ordered_json make_scenario(const PresetDef& def) {
    const int H = static_cast<int>(def.alpha.size());

    nlohmann::ordered_json j;
    j["version"] = 1;
    nlohmann::ordered_json models = nlohmann::ordered_json::array();
    for (int h = 1; h <= H; ++h) {
        nlohmann::ordered_json mj;
        mj["alpha"] = def.alpha[static_cast<size_t>(h - 1)];
        mj["beta"] = def.beta[static_cast<size_t>(h - 1)];
        mj["has_exit"] = std::count(def.branch_layers.begin(), def.branch_layers.end(), h) > 0;
        models.push_back(mj);
    }
    j["sub_models"] = models;

    std::vector<std::vector<std::string>> ids(static_cast<size_t>(H) + 1);
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    Rng top = Rng::substream(def.seed, def.name, "nodes");
    double total_rate = 0.0;
    for (int k = 0; k < def.eds; ++k) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "ed%02d", k);
        double rate = round2(top.uniform(1.5, 2.5));
        total_rate += rate;
        ids[0].push_back(buf);
        nodes.push_back({{"id", buf}, {"layer", 0}, {"arrival_rate", rate}});
    }
    for (int h = 1; h <= H; ++h) {
        int count = def.es_counts[static_cast<size_t>(h - 1)];
        double demand = total_rate * def.alpha[static_cast<size_t>(h - 1)];
        std::vector<double> weights(static_cast<size_t>(count));
        double min_w = 1e9;
        for (double& w : weights) {
            w = top.uniform(1.0, 5.0);
            min_w = std::min(min_w, w);
        }
        // The slowest server sits at 75% utilization under an even split.
        double scale = (demand / count) / (0.75 * min_w);
        for (int k = 0; k < count; ++k) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "s%dn%02d", h, k);
            double mu = round1(weights[static_cast<size_t>(k)] * scale);
            ids[static_cast<size_t>(h)].push_back(buf);
            nodes.push_back({{"id", buf},
                             {"layer", h},
                             {"mu", mu},
                             {"modes", {round1(0.7 * mu), mu, round1(1.3 * mu)}}});
        }
    }
    j["nodes"] = nodes;

    nlohmann::ordered_json links = nlohmann::ordered_json::array();
    Rng linker = Rng::substream(def.seed, def.name, "links");
    for (int h = 0; h < H; ++h) {
        const auto& senders = ids[static_cast<size_t>(h)];
        const auto& receivers = ids[static_cast<size_t>(h) + 1];
        std::vector<int> fanin(receivers.size(), 0);
        std::vector<std::vector<bool>> chosen(senders.size(),
                                              std::vector<bool>(receivers.size(), false));
        for (size_t si = 0; si < senders.size(); ++si) {
            size_t want = std::min<size_t>(2 + linker.uniform_int(3), receivers.size());
            std::vector<size_t> pool(receivers.size());
            std::iota(pool.begin(), pool.end(), 0);
            for (size_t pick = 0; pick < want; ++pick) {
                size_t at = pick + linker.uniform_int(pool.size() - pick);
                std::swap(pool[pick], pool[at]);
                chosen[si][pool[pick]] = true;
                ++fanin[pool[pick]];
            }
        }
        for (size_t r = 0; r < receivers.size(); ++r) {
            if (fanin[r] > 0) continue;
            chosen[linker.uniform_int(senders.size())][r] = true;
        }
        for (size_t si = 0; si < senders.size(); ++si)
            for (size_t r = 0; r < receivers.size(); ++r) {
                if (!chosen[si][r]) continue;
                double rate =
                    h == 0 ? round2(linker.uniform(1.0, 10.0)) : round2(linker.uniform(10.0, 20.0));
                links.push_back({{"from", senders[si]}, {"to", receivers[r]}, {"rate", rate}});
            }
    }
    j["links"] = links;

    j["exit_table"] = def.name + "_records.csv";
    // 100 rounds at two 0.5 ms hops each fill the 100 ms phase exactly, and
    // every branch layer gets several threshold turns per phase.
    j["params"] = {{"n", 100}, {"m", 5}, {"comm_delay_ms", 0.5}};
    j["seed"] = def.seed;
    return j;
}

} // namespace

int main(int argc, char** argv) {
    std::string dir = argc > 1 ? argv[1] : "presets";

    PresetDef resnet;
    resnet.name = "resnet101";
    resnet.seed = 101;
    resnet.alpha = {2.21, 1.97, 1.97, 1.68};
    resnet.beta = {0.14, 0.77, 0.77, 0.77};
    resnet.branch_layers = {2, 3};
    resnet.es_counts = {6, 5, 5, 4};
    resnet.counts = {470, 582, 681};

    PresetDef bert;
    bert.name = "bert";
    bert.seed = 5;
    bert.alpha = {6.44, 8.05, 8.08, 8.08, 8.08};
    bert.beta = {0.01, 0.56, 0.56, 0.56, 0.56};
    bert.branch_layers = {2, 3, 4};
    bert.es_counts = {6, 5, 5, 4, 4};
    bert.counts = {552, 568, 572, 582};

    for (const PresetDef& def : {resnet, bert}) {
        epo::BranchRecordSet records = make_records(def);
        epo::write_file(dir + "/" + def.name + "_records.csv", epo::records_to_csv(records));
        epo::write_file(dir + "/" + def.name + ".json", make_scenario(def).dump(2) + "\n");
        std::cout << def.name << ": " << records.size() << " samples, "
                  << def.es_counts.size() << " layers\n";
    }
    return 0;
}
