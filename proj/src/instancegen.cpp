#include "epo/instancegen.hpp"

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "epo/analytics.hpp"
#include "epo/errors.hpp"
#include "epo/exit_profile.hpp"
#include "epo/rng.hpp"

namespace epo {

Scenario random_instance(uint64_t seed, const InstanceSpec& spec) {
    Rng rng = Rng::substream(seed, "instance", "topology");
    Scenario s;
    s.version = 1;
    s.seed = seed;

    int H = spec.depth_min +
            static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.depth_max - spec.depth_min + 1)));
    for (int h = 1; h <= H; ++h) {
        SubModelSpec m;
        m.alpha = rng.uniform(0.5, 3.0);
        m.beta = h == 1 ? rng.uniform(0.05, 0.3) : rng.uniform(0.2, 1.0);
        m.has_exit = spec.with_exits && h >= 1 && h < H && rng.bernoulli(0.6);
        s.sub_models.push_back(m);
    }

    std::vector<std::vector<std::string>> ids(static_cast<size_t>(H) + 1);
    int n0 = spec.eds_min +
             static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.eds_max - spec.eds_min + 1)));
    for (int k = 0; k < n0; ++k) {
        NodeSpec nd;
        nd.id = "d" + std::to_string(k);
        nd.layer = 0;
        nd.arrival_rate = rng.uniform(0.5, 3.0);
        ids[0].push_back(nd.id);
        s.nodes.push_back(nd);
    }
    for (int h = 1; h <= H; ++h) {
        int span = spec.width_max - spec.width_min + 1;
        int nh = spec.width_min + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(span)));
        for (int k = 0; k < nh; ++k) {
            NodeSpec nd;
            nd.id = "s" + std::to_string(h) + "_" + std::to_string(k);
            nd.layer = h;
            nd.mu = rng.uniform(1.0, 5.0); // rescaled below
            ids[static_cast<size_t>(h)].push_back(nd.id);
            s.nodes.push_back(nd);
        }
    }

    // Every sender reaches a random non-empty subset of the next layer; every
    // receiver is reachable.
    for (int h = 0; h < H; ++h) {
        const auto& senders = ids[static_cast<size_t>(h)];
        const auto& receivers = ids[static_cast<size_t>(h) + 1];
        std::vector<bool> covered(receivers.size(), false);
        for (const std::string& from : senders) {
            bool any = false;
            std::vector<bool> take(receivers.size(), false);
            for (size_t r = 0; r < receivers.size(); ++r) {
                take[r] = rng.bernoulli(0.7);
                any |= take[r];
            }
            if (!any) take[rng.uniform_int(receivers.size())] = true;
            for (size_t r = 0; r < receivers.size(); ++r) {
                if (!take[r]) continue;
                LinkSpec link;
                link.from = from;
                link.to = receivers[r];
                link.rate = h == 0 ? rng.uniform(1.0, 10.0) : rng.uniform(10.0, 20.0);
                s.links.push_back(link);
                covered[r] = true;
            }
        }
        for (size_t r = 0; r < receivers.size(); ++r) {
            if (covered[r]) continue;
            LinkSpec link;
            link.from = senders[rng.uniform_int(senders.size())];
            link.to = receivers[r];
            link.rate = h == 0 ? rng.uniform(1.0, 10.0) : rng.uniform(10.0, 20.0);
            s.links.push_back(link);
        }
    }

    std::vector<int> branch_layers;
    for (int h = 1; h <= H; ++h)
        if (s.sub_models[static_cast<size_t>(h) - 1].has_exit) branch_layers.push_back(h);
    if (!branch_layers.empty()) {
        SynthProfile profile = default_synth_profile(branch_layers, H);
        BranchRecordSet records =
            synthesize_records(Rng::mix(seed, Rng::hash_str("records")), spec.exit_samples, profile);
        s.exit_table = std::make_shared<ExitTable>(build_exit_table(records));
    } else {
        auto table = std::make_shared<ExitTable>();
        table->samples = 1;
        table->correct_total = {1};
        table->final_correct_count = {1};
        table->a_min = table->a_max = 1.0;
        s.exit_table = table;
    }

    s.finalize();

    // Rescale capacities: evaluate the even split with no early exits, then
    // size servers so the hottest one sits at the drawn utilization.
    std::vector<double> survival(static_cast<size_t>(H) + 1, 1.0);
    FlowState flow = propagate_flows(s, uniform_strategy(s), survival);
    double worst = 0.0;
    for (size_t j = 0; j < s.nodes.size(); ++j)
        if (s.nodes[j].layer >= 1)
            worst = std::max(worst, flow.lambda[j] / s.nodes[j].mu);
    double target = rng.uniform(spec.load_lo, spec.load_hi);
    double scale = worst > 0.0 ? worst / target : 1.0;
    for (auto& nd : s.nodes)
        if (nd.layer >= 1) {
            nd.mu *= scale;
            nd.modes = {0.7 * nd.mu, nd.mu, 1.3 * nd.mu};
        }

    s.params = AlgoParams{};
    double min_mu = 0.0;
    bool any = false;
    for (const auto& nd : s.nodes)
        if (nd.layer >= 1) {
            min_mu = any ? std::min(min_mu, nd.mu) : nd.mu;
            any = true;
        }
    s.params.epsilon = any ? 0.01 * min_mu : 0.01;
    s.finalize();
    return s;
}

Strategy random_strategy(const Scenario& s, uint64_t seed) {
    Rng rng = Rng::substream(seed, "instance", "strategy");
    Strategy p;
    p.rows.resize(s.nodes.size());
    for (size_t i = 0; i < s.nodes.size(); ++i) {
        size_t fanout = s.successors[i].size();
        if (fanout == 0) continue;
        std::vector<double>& row = p.rows[i];
        row.resize(fanout);
        double total = 0.0;
        for (double& v : row) {
            v = -std::log(1.0 - rng.uniform()) + 1e-3;
            total += v;
        }
        double head = 0.0;
        for (size_t k = 0; k + 1 < fanout; ++k) {
            row[k] /= total;
            head += row[k];
        }
        row[fanout - 1] = 1.0 - head;
    }
    return p;
}

Strategy feasible_random_strategy(const Scenario& s, const std::vector<double>& survival,
                                  uint64_t seed) {
    Strategy even = uniform_strategy(s);
    Strategy rand = random_strategy(s, seed);
    double w = 1.0;
    for (int attempt = 0; attempt < 60; ++attempt) {
        Strategy p = even;
        for (size_t i = 0; i < p.rows.size(); ++i) {
            size_t fanout = p.rows[i].size();
            if (fanout == 0) continue;
            double head = 0.0;
            for (size_t k = 0; k + 1 < fanout; ++k) {
                p.rows[i][k] = (1.0 - w) * even.rows[i][k] + w * rand.rows[i][k];
                head += p.rows[i][k];
            }
            p.rows[i][fanout - 1] = 1.0 - head;
        }
        FlowState flow = propagate_flows(s, p, survival);
        bool inside = true;
        for (size_t j = 0; j < s.nodes.size(); ++j) {
            if (s.nodes[j].layer == 0) continue;
            if (flow.lambda[j] > 0.95 * (s.nodes[j].mu - s.params.epsilon)) inside = false;
        }
        if (inside) return p;
        w *= 0.5;
    }
    return even;
}

} // namespace epo
