#include "epo/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "epo/errors.hpp"
#include "epo/textio.hpp"

namespace epo {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ParseError("unknown field '" + it.key() + "' in " + where);
}

std::string dirname(const std::string& path) {
    auto pos = path.find_last_of('/');
    return pos == std::string::npos ? std::string(".") : path.substr(0, pos);
}

std::shared_ptr<const ExitTable> branchless_table(double accuracy) {
    auto t = std::make_shared<ExitTable>();
    const int64_t scale = 1000000000;
    t->samples = scale;
    t->correct_total = {static_cast<int64_t>(std::llround(accuracy * static_cast<double>(scale)))};
    t->final_correct_count = t->correct_total;
    t->a_min = t->a_max = static_cast<double>(t->correct_total[0]) / static_cast<double>(scale);
    return t;
}

} // namespace

int Scenario::node_index(const std::string& id) const {
    for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == id) return static_cast<int>(i);
    throw DomainError("unknown node id: " + id);
}

void Scenario::finalize() {
    const int H = depth();
    if (H < 1) throw ParseError("scenario requires at least one sub-model");

    std::stable_sort(nodes.begin(), nodes.end(), [](const NodeSpec& a, const NodeSpec& b) {
        return a.layer != b.layer ? a.layer < b.layer : a.id < b.id;
    });
    std::set<std::string> ids;
    for (const auto& nd : nodes) {
        if (!ids.insert(nd.id).second) throw ParseError("duplicate node id: " + nd.id);
        if (nd.layer < 0 || nd.layer > H)
            throw ParseError("node " + nd.id + " has layer outside 0.." + std::to_string(H));
    }

    layer_nodes.assign(static_cast<size_t>(H) + 1, {});
    for (size_t i = 0; i < nodes.size(); ++i)
        layer_nodes[static_cast<size_t>(nodes[i].layer)].push_back(static_cast<int>(i));

    edges.clear();
    std::set<std::pair<int, int>> seen;
    for (const auto& lk : links) {
        int from = node_index(lk.from);
        int to = node_index(lk.to);
        if (nodes[to].layer != nodes[from].layer + 1)
            throw ParseError("link " + lk.from + " -> " + lk.to + " does not join adjacent layers");
        if (!seen.insert({from, to}).second)
            throw ParseError("duplicate link " + lk.from + " -> " + lk.to);
        edges.push_back({from, to, lk.rate});
    }
    std::sort(edges.begin(), edges.end(),
              [](const Edge& a, const Edge& b) { return a.from != b.from ? a.from < b.from : a.to < b.to; });

    successors.assign(nodes.size(), {});
    predecessors.assign(nodes.size(), {});
    for (size_t e = 0; e < edges.size(); ++e) {
        successors[static_cast<size_t>(edges[e].from)].push_back(static_cast<int>(e));
        predecessors[static_cast<size_t>(edges[e].to)].push_back(static_cast<int>(e));
    }
}

Scenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir) {
    if (!j.is_object()) throw ParseError("scenario: top level must be an object");
    reject_unknown(j, {"version", "sub_models", "nodes", "links", "exit_table", "params", "seed"},
                   "scenario");
    Scenario s;
    try {
        s.version = j.at("version").get<int>();
        if (s.version != 1)
            throw ParseError("scenario: unsupported version " + std::to_string(s.version));

        for (const auto& mj : j.at("sub_models")) {
            reject_unknown(mj, {"alpha", "beta", "has_exit"}, "sub_models entry");
            SubModelSpec m;
            m.alpha = mj.at("alpha").get<double>();
            m.beta = mj.at("beta").get<double>();
            m.has_exit = mj.value("has_exit", false);
            s.sub_models.push_back(m);
        }

        for (const auto& nj : j.at("nodes")) {
            reject_unknown(nj, {"id", "layer", "mu", "arrival_rate", "modes"}, "nodes entry");
            NodeSpec n;
            n.id = nj.at("id").get<std::string>();
            n.layer = nj.at("layer").get<int>();
            n.mu = nj.value("mu", 0.0);
            n.arrival_rate = nj.value("arrival_rate", 0.0);
            if (nj.contains("modes")) n.modes = nj.at("modes").get<std::vector<double>>();
            s.nodes.push_back(n);
        }

        for (const auto& lj : j.at("links")) {
            reject_unknown(lj, {"from", "to", "rate"}, "links entry");
            LinkSpec l;
            l.from = lj.at("from").get<std::string>();
            l.to = lj.at("to").get<std::string>();
            l.rate = lj.at("rate").get<double>();
            s.links.push_back(l);
        }

        if (j.contains("params")) {
            const auto& pj = j.at("params");
            reject_unknown(pj,
                           {"a", "K", "epsilon", "tau_p", "tau_c", "m", "n", "slot_seconds",
                            "config_phase_ms", "comm_delay_ms", "backtrack", "early_stop"},
                           "params");
            AlgoParams& p = s.params;
            p.a = pj.value("a", p.a);
            p.K = pj.value("K", p.K);
            p.epsilon = pj.value("epsilon", 0.0);
            p.tau_p = pj.value("tau_p", p.tau_p);
            p.tau_c = pj.value("tau_c", p.tau_c);
            p.m = pj.value("m", p.m);
            p.n = pj.value("n", p.n);
            p.slot_seconds = pj.value("slot_seconds", p.slot_seconds);
            p.config_phase_ms = pj.value("config_phase_ms", p.config_phase_ms);
            p.comm_delay_ms = pj.value("comm_delay_ms", p.comm_delay_ms);
            p.backtrack = pj.value("backtrack", p.backtrack);
            p.early_stop = pj.value("early_stop", p.early_stop);
        }
        s.seed = j.value("seed", 0ull);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scenario: ") + e.what());
    }

    s.finalize();

    // Capacity margin defaults to 1% of the slowest server.
    if (s.params.epsilon <= 0.0) {
        double min_mu = 0.0;
        bool any = false;
        for (const auto& n : s.nodes)
            if (n.layer >= 1 && n.mu > 0.0) {
                min_mu = any ? std::min(min_mu, n.mu) : n.mu;
                any = true;
            }
        s.params.epsilon = any ? 0.01 * min_mu : 0.01;
    }

    bool any_exit = false;
    for (const auto& m : s.sub_models) any_exit |= m.has_exit;

    if (j.contains("exit_table")) {
        const auto& ej = j.at("exit_table");
        try {
            if (ej.is_string()) {
                std::string ref = ej.get<std::string>();
                std::string path = ref.empty() || ref[0] == '/' ? ref : base_dir + "/" + ref;
                if (ref.size() >= 4 && ref.substr(ref.size() - 4) == ".csv") {
                    s.exit_table = std::make_shared<ExitTable>(
                        build_exit_table(records_from_csv(read_file(path))));
                } else {
                    s.exit_table = std::make_shared<ExitTable>(
                        table_from_json(nlohmann::json::parse(read_file(path))));
                }
                s.source_files.push_back(path);
            } else if (ej.is_object() && ej.contains("final_accuracy")) {
                reject_unknown(ej, {"final_accuracy"}, "exit_table");
                s.exit_table = branchless_table(ej.at("final_accuracy").get<double>());
            } else {
                s.exit_table = std::make_shared<ExitTable>(table_from_json(ej));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("exit_table: ") + e.what());
        }
    } else {
        if (any_exit)
            throw ParseError("scenario: sub-models declare exit branches but no exit_table is given");
        s.exit_table = branchless_table(1.0);
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    Scenario s = scenario_from_json(j, dirname(path));
    s.source_files.insert(s.source_files.begin(), path);
    return s;
}

nlohmann::ordered_json scenario_to_json(const Scenario& s) {
    nlohmann::ordered_json j;
    j["version"] = s.version;
    nlohmann::ordered_json models = nlohmann::ordered_json::array();
    for (const auto& m : s.sub_models) {
        nlohmann::ordered_json mj;
        mj["alpha"] = m.alpha;
        mj["beta"] = m.beta;
        mj["has_exit"] = m.has_exit;
        models.push_back(mj);
    }
    j["sub_models"] = models;
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : s.nodes) {
        nlohmann::ordered_json nj;
        nj["id"] = n.id;
        nj["layer"] = n.layer;
        if (n.layer >= 1) nj["mu"] = n.mu;
        if (n.layer == 0) nj["arrival_rate"] = n.arrival_rate;
        if (!n.modes.empty()) nj["modes"] = n.modes;
        nodes.push_back(nj);
    }
    j["nodes"] = nodes;
    nlohmann::ordered_json links = nlohmann::ordered_json::array();
    for (const auto& l : s.links) {
        nlohmann::ordered_json lj;
        lj["from"] = l.from;
        lj["to"] = l.to;
        lj["rate"] = l.rate;
        links.push_back(lj);
    }
    j["links"] = links;
    if (s.exit_table) j["exit_table"] = table_to_json(*s.exit_table);
    nlohmann::ordered_json pj;
    const AlgoParams& p = s.params;
    pj["a"] = p.a;
    pj["K"] = p.K;
    pj["epsilon"] = p.epsilon;
    pj["tau_p"] = p.tau_p;
    pj["tau_c"] = p.tau_c;
    pj["m"] = p.m;
    pj["n"] = p.n;
    pj["slot_seconds"] = p.slot_seconds;
    pj["config_phase_ms"] = p.config_phase_ms;
    pj["comm_delay_ms"] = p.comm_delay_ms;
    pj["backtrack"] = p.backtrack;
    pj["early_stop"] = p.early_stop;
    j["params"] = pj;
    j["seed"] = s.seed;
    return j;
}

std::vector<Diagnostic> validate_scenario(const Scenario& s) {
    std::vector<Diagnostic> d;
    auto err = [&](const std::string& m) { d.push_back({Diagnostic::Severity::Error, m}); };
    auto warn = [&](const std::string& m) { d.push_back({Diagnostic::Severity::Warning, m}); };
    const int H = s.depth();

    for (int h = 1; h <= H; ++h) {
        const auto& m = s.stage(h);
        if (m.alpha <= 0.0) err("sub-model " + std::to_string(h) + ": alpha must be > 0");
        if (m.beta <= 0.0) err("sub-model " + std::to_string(h) + ": beta must be > 0");
        if (m.has_exit && h == H)
            err("sub-model " + std::to_string(h) + ": exit branch on the final stage is meaningless");
    }

    for (size_t i = 0; i < s.nodes.size(); ++i) {
        const NodeSpec& n = s.nodes[i];
        if (n.layer == 0) {
            if (n.arrival_rate < 0.0) err("node " + n.id + ": arrival_rate must be >= 0");
            if (n.mu != 0.0) err("node " + n.id + ": layer-0 nodes carry no capacity");
            if (!n.modes.empty()) err("node " + n.id + ": layer-0 nodes carry no capacity modes");
            if (s.successors[i].empty()) err("node " + n.id + ": no outgoing links");
        } else {
            if (n.mu <= 0.0) err("node " + n.id + ": mu must be > 0");
            if (n.arrival_rate != 0.0) err("node " + n.id + ": only layer-0 nodes generate tasks");
            for (double m : n.modes)
                if (m <= 0.0) err("node " + n.id + ": capacity modes must be > 0");
            if (s.predecessors[i].empty()) err("node " + n.id + ": no incoming links");
            if (n.layer < H && s.successors[i].empty()) err("node " + n.id + ": no outgoing links");
        }
    }
    for (int h = 0; h <= H; ++h)
        if (s.layer_nodes[static_cast<size_t>(h)].empty())
            err("layer " + std::to_string(h) + " has no nodes");

    for (const auto& l : s.links)
        if (l.rate <= 0.0) err("link " + l.from + " -> " + l.to + ": rate must be > 0");

    const AlgoParams& p = s.params;
    if (p.a < 0.0 || p.a > 1.0) err("params: a must lie in [0,1]");
    if (p.K <= 0.0) err("params: K must be > 0");
    if (p.epsilon <= 0.0) err("params: epsilon must be > 0");
    if (p.tau_p <= 0.0 || p.tau_p > 1.0) err("params: tau_p must lie in (0,1]");
    if (p.tau_c < 1) err("params: tau_c must be >= 1");
    if (p.m < 1) err("params: m must be >= 1");
    if (p.n < 1) err("params: n must be >= 1");
    if (p.slot_seconds <= 0.0) err("params: slot_seconds must be > 0");
    if (p.config_phase_ms < 0.0) err("params: config_phase_ms must be >= 0");
    if (p.comm_delay_ms < 0.0) err("params: comm_delay_ms must be >= 0");

    if (s.exit_table) {
        std::vector<int> declared;
        for (int h = 1; h <= H; ++h)
            if (s.stage(h).has_exit) declared.push_back(h);
        if (declared != s.exit_table->branch_layers)
            err("exit table branch layers do not match sub-model exit flags");
    } else {
        err("scenario has no exit table attached");
    }

    // Aggregate demand check with no early exits: if a whole layer lacks the
    // capacity for the full task stream, no strategy can be stable.
    double phi_total = 0.0;
    for (const auto& n : s.nodes)
        if (n.layer == 0) phi_total += n.arrival_rate;
    for (int h = 1; h <= H; ++h) {
        double cap = 0.0;
        for (int i : s.layer_nodes[static_cast<size_t>(h)]) cap += s.nodes[static_cast<size_t>(i)].mu;
        double demand = phi_total * s.stage(h).alpha;
        if (demand >= cap)
            warn("layer " + std::to_string(h) + " infeasible without early exits: demand " +
                 fmt6(demand) + " GFLOP/s vs capacity " + fmt6(cap) + " GFLOP/s");
    }

    if (p.n * 2.0 * p.comm_delay_ms > p.config_phase_ms)
        warn("round budget: n*2*comm_delay_ms = " + fmt6(p.n * 2.0 * p.comm_delay_ms) +
             " ms exceeds config_phase_ms = " + fmt6(p.config_phase_ms) + " ms");

    return d;
}

std::vector<Diagnostic> validate_strategy(const Scenario& s, const Strategy& p) {
    std::vector<Diagnostic> d;
    auto err = [&](const std::string& m) { d.push_back({Diagnostic::Severity::Error, m}); };
    if (p.rows.size() != s.nodes.size()) {
        err("strategy has " + std::to_string(p.rows.size()) + " rows for " +
            std::to_string(s.nodes.size()) + " nodes");
        return d;
    }
    const int H = s.depth();
    for (size_t i = 0; i < s.nodes.size(); ++i) {
        const auto& row = p.rows[i];
        size_t want = s.nodes[i].layer < H ? s.successors[i].size() : 0;
        if (row.size() != want) {
            err("node " + s.nodes[i].id + ": row has " + std::to_string(row.size()) +
                " entries, expected " + std::to_string(want));
            continue;
        }
        if (row.empty()) continue;
        double sum = 0.0;
        bool negative = false;
        for (double v : row) {
            if (v < 0.0) negative = true;
            sum += v;
        }
        if (negative) err("node " + s.nodes[i].id + ": negative probability");
        if (std::abs(sum - 1.0) > 1e-9)
            err("node " + s.nodes[i].id + ": row sums to " + fmt17(sum));
    }
    return d;
}

Strategy uniform_strategy(const Scenario& s) {
    Strategy p;
    p.rows.resize(s.nodes.size());
    const int H = s.depth();
    for (size_t i = 0; i < s.nodes.size(); ++i) {
        if (s.nodes[i].layer >= H) continue;
        size_t k = s.successors[i].size();
        if (k == 0) continue;
        std::vector<double> row(k, 1.0 / static_cast<double>(k));
        double partial = 0.0;
        for (size_t j = 0; j + 1 < k; ++j) partial += row[j];
        row[k - 1] = 1.0 - partial;
        p.rows[i] = std::move(row);
    }
    return p;
}

bool has_errors(const std::vector<Diagnostic>& diags) {
    for (const auto& d : diags)
        if (d.severity == Diagnostic::Severity::Error) return true;
    return false;
}

std::string format_diagnostics(const std::vector<Diagnostic>& diags) {
    std::ostringstream out;
    for (const auto& d : diags)
        out << (d.severity == Diagnostic::Severity::Error ? "error: " : "warning: ") << d.message
            << '\n';
    return out.str();
}

nlohmann::ordered_json strategy_to_json(const Scenario& s, const Strategy& p) {
    nlohmann::ordered_json j;
    for (size_t i = 0; i < s.nodes.size(); ++i) {
        if (p.rows.size() <= i || p.rows[i].empty()) continue;
        j[s.nodes[i].id] = p.rows[i];
    }
    return j;
}

Strategy strategy_from_json(const Scenario& s, const nlohmann::json& j) {
    Strategy p;
    p.rows.resize(s.nodes.size());
    for (auto it = j.begin(); it != j.end(); ++it) {
        int i = s.node_index(it.key());
        auto row = it.value().get<std::vector<double>>();
        if (row.size() != s.successors[static_cast<size_t>(i)].size())
            throw ParseError("strategy: node " + it.key() + " row size mismatch");
        p.rows[static_cast<size_t>(i)] = std::move(row);
    }
    const int H = s.depth();
    for (size_t i = 0; i < s.nodes.size(); ++i)
        if (s.nodes[i].layer < H && !s.successors[i].empty() && p.rows[i].empty())
            throw ParseError("strategy: missing row for node " + s.nodes[i].id);
    return p;
}

nlohmann::ordered_json thresholds_to_json(const Scenario& s, const ThresholdSetting& c) {
    nlohmann::ordered_json j;
    const ExitTable& t = *s.exit_table;
    auto values = t.setting_values(c);
    for (size_t b = 0; b < t.branch_layers.size(); ++b)
        j[std::to_string(t.branch_layers[b])] = values[b];
    return j;
}

ThresholdSetting thresholds_from_json(const Scenario& s, const nlohmann::json& j) {
    const ExitTable& t = *s.exit_table;
    std::vector<double> values(t.branch_layers.size(), 0.0);
    if (j.size() != t.branch_layers.size())
        throw ParseError("thresholds: expected one entry per exit branch");
    for (size_t b = 0; b < t.branch_layers.size(); ++b) {
        std::string key = std::to_string(t.branch_layers[b]);
        if (!j.contains(key)) throw ParseError("thresholds: missing branch layer " + key);
        values[b] = j.at(key).get<double>();
    }
    return t.setting_from_values(values);
}

} // namespace epo
