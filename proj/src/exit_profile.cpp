#include "epo/exit_profile.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "epo/errors.hpp"
#include "epo/rng.hpp"
#include "epo/textio.hpp"

namespace epo {

std::vector<double> default_threshold_grid() {
    std::vector<double> g(21);
    for (int k = 0; k <= 20; ++k) g[k] = k / 20.0;
    return g;
}

size_t ExitTable::cell_index(const ThresholdSetting& c) const {
    if (c.idx.size() != grids.size()) throw DomainError("threshold setting arity mismatch");
    size_t flat = 0;
    for (size_t b = 0; b < grids.size(); ++b) {
        if (c.idx[b] < 0 || c.idx[b] >= static_cast<int>(grids[b].size()))
            throw DomainError("threshold index out of grid range");
        flat = flat * grids[b].size() + static_cast<size_t>(c.idx[b]);
    }
    return flat;
}

int ExitTable::grid_index(size_t branch, double value) const {
    const auto& g = grids.at(branch);
    for (size_t k = 0; k < g.size(); ++k)
        if (std::abs(g[k] - value) <= 1e-9) return static_cast<int>(k);
    throw DomainError("off-grid threshold value " + fmt17(value));
}

ThresholdSetting ExitTable::setting_from_values(const std::vector<double>& values) const {
    if (values.size() != grids.size()) throw DomainError("threshold setting arity mismatch");
    ThresholdSetting c;
    for (size_t b = 0; b < values.size(); ++b) c.idx.push_back(grid_index(b, values[b]));
    return c;
}

std::vector<double> ExitTable::setting_values(const ThresholdSetting& c) const {
    if (c.idx.size() != grids.size()) throw DomainError("threshold setting arity mismatch");
    std::vector<double> v;
    for (size_t b = 0; b < c.idx.size(); ++b) v.push_back(grids[b].at(c.idx[b]));
    return v;
}

ThresholdSetting ExitTable::max_setting() const {
    ThresholdSetting c;
    for (const auto& g : grids) c.idx.push_back(static_cast<int>(g.size()) - 1);
    return c;
}

namespace {

// Dense tensor with per-branch extent grid_size + 1, used for cumulative
// counts over quantized confidences.
struct CountTensor {
    std::vector<size_t> dims;
    std::vector<size_t> strides;
    std::vector<int64_t> data;

    explicit CountTensor(const std::vector<size_t>& d) : dims(d) {
        size_t total = 1;
        strides.assign(dims.size(), 0);
        for (size_t i = dims.size(); i-- > 0;) {
            strides[i] = total;
            total *= dims[i];
        }
        data.assign(total, 0);
    }

    int64_t& at(const std::vector<size_t>& ix) {
        size_t flat = 0;
        for (size_t i = 0; i < dims.size(); ++i) flat += ix[i] * strides[i];
        return data[flat];
    }

    // In-place prefix sums along every axis; afterwards at(ix) holds the sum
    // over all cells with coordinates <= ix componentwise.
    void cumulate() {
        for (size_t axis = 0; axis < dims.size(); ++axis) {
            size_t stride = strides[axis];
            size_t extent = dims[axis];
            size_t block = stride * extent;
            for (size_t base = 0; base < data.size(); base += block)
                for (size_t off = 0; off < stride; ++off)
                    for (size_t k = 1; k < extent; ++k)
                        data[base + off + k * stride] += data[base + off + (k - 1) * stride];
        }
    }
};

} // namespace

ExitTable build_exit_table(const BranchRecordSet& records,
                           const std::vector<std::vector<double>>& grids) {
    const size_t B = records.branch_layers.size();
    if (grids.size() != B) throw DomainError("one grid required per exit branch");
    for (const auto& g : grids) {
        if (g.empty()) throw DomainError("empty threshold grid");
        if (!std::is_sorted(g.begin(), g.end())) throw DomainError("threshold grid must be ascending");
    }
    const int64_t n = records.size();
    if (n == 0) throw DomainError("record set is empty");

    ExitTable t;
    t.branch_layers = records.branch_layers;
    t.grids = grids;
    t.samples = n;

    // Quantize: q = number of grid points <= confidence.  A sample exits at
    // threshold index k exactly when k < q (the exit rule is inclusive).
    std::vector<size_t> hist_dims(B);
    for (size_t b = 0; b < B; ++b) hist_dims[b] = grids[b].size() + 1;
    if (B == 0) hist_dims = {1};

    CountTensor h_count(hist_dims), h_final(hist_dims);
    std::vector<CountTensor> h_corr;
    for (size_t b = 0; b < B; ++b) h_corr.emplace_back(hist_dims);

    std::vector<size_t> q(std::max<size_t>(B, 1), 0);
    for (int64_t s = 0; s < n; ++s) {
        for (size_t b = 0; b < B; ++b) {
            const auto& g = grids[b];
            q[b] = static_cast<size_t>(
                std::upper_bound(g.begin(), g.end(), records.confidence[s][b]) - g.begin());
        }
        if (B == 0) q[0] = 0;
        h_count.at(q) += 1;
        h_final.at(q) += records.final_correct[s] ? 1 : 0;
        for (size_t b = 0; b < B; ++b) h_corr[b].at(q) += records.correct[s][b] ? 1 : 0;
    }
    h_count.cumulate();
    h_final.cumulate();
    for (auto& hc : h_corr) hc.cumulate();

    size_t cells = 1;
    for (size_t b = 0; b < B; ++b) cells *= grids[b].size();
    t.correct_total.assign(cells, 0);
    t.final_correct_count.assign(cells, 0);
    t.reach.assign(B, std::vector<int64_t>(cells, 0));
    t.survive.assign(B, std::vector<int64_t>(cells, 0));
    t.exit_correct.assign(B, std::vector<int64_t>(cells, 0));

    // For combo (k_1..k_B) the samples surviving branches 1..j are those with
    // q_b <= k_b for all b <= j; constraints on later branches are released
    // by looking up the top coordinate.
    std::vector<int> combo(B, 0);
    std::vector<size_t> ix(std::max<size_t>(B, 1), 0);
    for (size_t cell = 0; cell < cells; ++cell) {
        auto lookup = [&](CountTensor& ct, size_t constrained) -> int64_t {
            for (size_t b = 0; b < B; ++b)
                ix[b] = b < constrained ? static_cast<size_t>(combo[b]) : hist_dims[b] - 1;
            if (B == 0) ix[0] = 0;
            return ct.at(ix);
        };

        int64_t correct = 0;
        int64_t prev_survivors = n;
        for (size_t b = 0; b < B; ++b) {
            int64_t surv = lookup(h_count, b + 1);
            int64_t corr_reach = lookup(h_corr[b], b);
            int64_t corr_surv = lookup(h_corr[b], b + 1);
            t.reach[b][cell] = prev_survivors;
            t.survive[b][cell] = surv;
            t.exit_correct[b][cell] = corr_reach - corr_surv;
            correct += t.exit_correct[b][cell];
            prev_survivors = surv;
        }
        t.final_correct_count[cell] = lookup(h_final, B);
        correct += t.final_correct_count[cell];
        t.correct_total[cell] = correct;

        for (size_t b = B; b-- > 0;) {
            if (++combo[b] < static_cast<int>(grids[b].size())) break;
            combo[b] = 0;
        }
    }

    int64_t cmin = t.correct_total[0], cmax = t.correct_total[0];
    for (int64_t c : t.correct_total) {
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
    }
    t.a_min = static_cast<double>(cmin) / static_cast<double>(n);
    t.a_max = static_cast<double>(cmax) / static_cast<double>(n);
    return t;
}

ExitTable build_exit_table(const BranchRecordSet& records) {
    std::vector<std::vector<double>> grids(records.branch_layers.size(), default_threshold_grid());
    return build_exit_table(records, grids);
}

ExitQuery query(const ExitTable& table, const ThresholdSetting& c) {
    size_t cell = table.cell_index(c);
    ExitQuery out;
    out.accuracy = static_cast<double>(table.correct_total[cell]) / static_cast<double>(table.samples);
    const size_t B = table.branch_count();
    out.surviving.resize(B);
    out.exit_accuracy.resize(B);
    for (size_t b = 0; b < B; ++b) {
        int64_t reach = table.reach[b][cell];
        int64_t surv = table.survive[b][cell];
        int64_t exits = reach - surv;
        // Unreached branches and zero-exit settings never sample these
        // ratios; neutral values keep downstream arithmetic finite.
        out.surviving[b] = reach > 0 ? static_cast<double>(surv) / static_cast<double>(reach) : 1.0;
        out.exit_accuracy[b] =
            exits > 0 ? static_cast<double>(table.exit_correct[b][cell]) / static_cast<double>(exits) : 1.0;
    }
    int64_t completions = B > 0 ? table.survive[B - 1][cell] : table.samples;
    out.final_accuracy = completions > 0
                             ? static_cast<double>(table.final_correct_count[cell]) /
                                   static_cast<double>(completions)
                             : 1.0;
    return out;
}

AccuracyBounds accuracy_bounds(const ExitTable& table) {
    return {table.a_min, table.a_max};
}

std::vector<double> layer_survival(const ExitTable& table, const ThresholdSetting& c, int layers) {
    std::vector<double> iv(static_cast<size_t>(layers) + 1, 1.0);
    ExitQuery qr = query(table, c);
    for (size_t b = 0; b < table.branch_layers.size(); ++b) {
        int h = table.branch_layers[b];
        if (h < 1 || h > layers) throw DomainError("exit branch outside pipeline layers");
        iv[static_cast<size_t>(h)] = qr.surviving[b];
    }
    return iv;
}

SynthProfile default_synth_profile(const std::vector<int>& branch_layers, int final_layer) {
    SynthProfile p;
    p.branch_layers = branch_layers;
    p.final_layer = final_layer;
    const size_t B = branch_layers.size();
    for (size_t b = 0; b < B; ++b) {
        double frac = B > 1 ? static_cast<double>(b) / static_cast<double>(B - 1) : 1.0;
        p.branch_accuracy.push_back(0.55 + 0.25 * frac);
    }
    p.final_accuracy = 0.88;
    return p;
}

BranchRecordSet synthesize_records(uint64_t seed, int64_t n, const SynthProfile& profile) {
    if (profile.branch_accuracy.size() != profile.branch_layers.size())
        throw DomainError("profile accuracy arity mismatch");
    BranchRecordSet r;
    r.branch_layers = profile.branch_layers;
    r.final_layer = profile.final_layer;
    Rng rng = Rng::substream(seed, "records", "synth");
    for (int64_t s = 0; s < n; ++s) {
        std::vector<double> conf;
        std::vector<uint8_t> corr;
        for (size_t b = 0; b < profile.branch_layers.size(); ++b) {
            bool ok = rng.bernoulli(profile.branch_accuracy[b]);
            corr.push_back(ok ? 1 : 0);
            conf.push_back(ok ? rng.uniform(profile.conf_correct_lo, profile.conf_correct_hi)
                              : rng.uniform(profile.conf_wrong_lo, profile.conf_wrong_hi));
        }
        r.confidence.push_back(std::move(conf));
        r.correct.push_back(std::move(corr));
        r.final_correct.push_back(rng.bernoulli(profile.final_accuracy) ? 1 : 0);
    }
    return r;
}

BranchRecordSet records_from_csv(const std::string& text) {
    auto rows = parse_csv(text);
    if (rows.empty()) throw ParseError("records: empty document");
    const std::vector<std::string> header = {"sample_id", "layer", "confidence", "correct"};
    if (rows[0] != header) throw ParseError("records: expected header sample_id,layer,confidence,correct");

    struct Entry {
        double conf;
        uint8_t correct;
    };
    std::map<int64_t, std::map<int, Entry>> by_sample;
    int max_layer = 0;
    for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 4) throw ParseError("records: row " + std::to_string(i + 1) + " malformed");
        int64_t sid;
        int layer, correct;
        double conf;
        try {
            sid = std::stoll(rows[i][0]);
            layer = std::stoi(rows[i][1]);
            conf = std::stod(rows[i][2]);
            correct = std::stoi(rows[i][3]);
        } catch (const std::exception&) {
            throw ParseError("records: row " + std::to_string(i + 1) + " malformed");
        }
        if (layer < 1) throw ParseError("records: layer must be >= 1");
        if (conf < 0.0 || conf > 1.0) throw ParseError("records: confidence outside [0,1]");
        if (correct != 0 && correct != 1) throw ParseError("records: correct must be 0 or 1");
        if (by_sample[sid].count(layer)) throw ParseError("records: duplicate (sample, layer) row");
        by_sample[sid][layer] = {conf, static_cast<uint8_t>(correct)};
        max_layer = std::max(max_layer, layer);
    }
    if (by_sample.empty()) throw ParseError("records: no samples");

    std::set<int> layer_set;
    for (auto& [layer, e] : by_sample.begin()->second) layer_set.insert(layer);
    if (!layer_set.count(max_layer)) throw ParseError("records: sample missing final layer row");

    BranchRecordSet r;
    r.final_layer = max_layer;
    for (int layer : layer_set)
        if (layer != max_layer) r.branch_layers.push_back(layer);

    for (auto& [sid, entries] : by_sample) {
        std::set<int> have;
        for (auto& [layer, e] : entries) have.insert(layer);
        if (have != layer_set)
            throw ParseError("records: sample " + std::to_string(sid) +
                             " does not cover every branch and the final layer");
        std::vector<double> conf;
        std::vector<uint8_t> corr;
        for (int layer : r.branch_layers) {
            conf.push_back(entries[layer].conf);
            corr.push_back(entries[layer].correct);
        }
        r.confidence.push_back(std::move(conf));
        r.correct.push_back(std::move(corr));
        r.final_correct.push_back(entries[max_layer].correct);
    }
    return r;
}

std::string records_to_csv(const BranchRecordSet& records) {
    std::ostringstream out;
    out << "sample_id,layer,confidence,correct\n";
    for (int64_t s = 0; s < records.size(); ++s) {
        for (size_t b = 0; b < records.branch_layers.size(); ++b)
            out << s << ',' << records.branch_layers[b] << ',' << fmt17(records.confidence[s][b])
                << ',' << int(records.correct[s][b]) << '\n';
        out << s << ',' << records.final_layer << ",1," << int(records.final_correct[s]) << '\n';
    }
    return out.str();
}

nlohmann::ordered_json table_to_json(const ExitTable& table) {
    nlohmann::ordered_json j;
    j["samples"] = table.samples;
    j["branch_layers"] = table.branch_layers;
    nlohmann::ordered_json grids = nlohmann::ordered_json::array();
    for (const auto& g : table.grids) grids.push_back(g);
    j["grids"] = grids;
    j["a_min"] = table.a_min;
    j["a_max"] = table.a_max;

    nlohmann::ordered_json cells = nlohmann::ordered_json::object();
    const size_t B = table.branch_count();
    std::vector<int> combo(B, 0);
    for (size_t cell = 0; cell < table.cell_count(); ++cell) {
        std::string key;
        for (size_t b = 0; b < B; ++b) {
            if (b) key += ',';
            key += fmt17(table.grids[b][combo[b]]);
        }
        nlohmann::ordered_json c;
        c["correct"] = table.correct_total[cell];
        c["final_correct"] = table.final_correct_count[cell];
        nlohmann::ordered_json reach = nlohmann::ordered_json::array(),
                               survive = nlohmann::ordered_json::array(),
                               exit_corr = nlohmann::ordered_json::array();
        for (size_t b = 0; b < B; ++b) {
            reach.push_back(table.reach[b][cell]);
            survive.push_back(table.survive[b][cell]);
            exit_corr.push_back(table.exit_correct[b][cell]);
        }
        c["reach"] = reach;
        c["survive"] = survive;
        c["exit_correct"] = exit_corr;
        cells[key] = c;

        for (size_t b = B; b-- > 0;) {
            if (++combo[b] < static_cast<int>(table.grids[b].size())) break;
            combo[b] = 0;
        }
    }
    j["cells"] = cells;
    return j;
}

ExitTable table_from_json(const nlohmann::json& j) {
    ExitTable t;
    try {
        t.samples = j.at("samples").get<int64_t>();
        t.branch_layers = j.at("branch_layers").get<std::vector<int>>();
        t.grids = j.at("grids").get<std::vector<std::vector<double>>>();
        t.a_min = j.at("a_min").get<double>();
        t.a_max = j.at("a_max").get<double>();

        const size_t B = t.branch_layers.size();
        if (t.grids.size() != B) throw ParseError("table: grid arity mismatch");
        size_t cells = 1;
        for (const auto& g : t.grids) cells *= g.size();
        t.correct_total.assign(cells, 0);
        t.final_correct_count.assign(cells, 0);
        t.reach.assign(B, std::vector<int64_t>(cells, 0));
        t.survive.assign(B, std::vector<int64_t>(cells, 0));
        t.exit_correct.assign(B, std::vector<int64_t>(cells, 0));

        const auto& cj = j.at("cells");
        if (cj.size() != cells) throw ParseError("table: cell count mismatch");
        for (auto it = cj.begin(); it != cj.end(); ++it) {
            std::vector<double> values;
            std::istringstream ks(it.key());
            std::string part;
            while (std::getline(ks, part, ',')) values.push_back(std::stod(part));
            size_t cell = t.cell_index(t.setting_from_values(values));
            const auto& c = it.value();
            t.correct_total[cell] = c.at("correct").get<int64_t>();
            t.final_correct_count[cell] = c.at("final_correct").get<int64_t>();
            for (size_t b = 0; b < B; ++b) {
                t.reach[b][cell] = c.at("reach").at(b).get<int64_t>();
                t.survive[b][cell] = c.at("survive").at(b).get<int64_t>();
                t.exit_correct[b][cell] = c.at("exit_correct").at(b).get<int64_t>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("table: ") + e.what());
    }
    return t;
}

} // namespace epo
