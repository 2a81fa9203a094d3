#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace epo {

// Per-sample confidence records collected once per model.  Each sample carries
// one (confidence, correct) pair per exit branch plus a correctness flag for
// the final layer, so any combination of thresholds can be evaluated without
// re-running inference.
struct BranchRecordSet {
    std::vector<int> branch_layers; // ascending, final layer excluded
    int final_layer = 0;

    // Indexed [sample][branch position]; final_correct indexed [sample].
    std::vector<std::vector<double>> confidence;
    std::vector<std::vector<uint8_t>> correct;
    std::vector<uint8_t> final_correct;

    int64_t size() const { return static_cast<int64_t>(final_correct.size()); }
};

// Thresholds are restricted to discrete per-branch grids; a setting stores
// grid indices, one per exit branch, aligned with ExitTable::branch_layers.
struct ThresholdSetting {
    std::vector<int> idx;

    bool operator==(const ThresholdSetting& o) const { return idx == o.idx; }
};

// Exhaustive accuracy / surviving-ratio table over the grid product.  Cells
// hold integer counts so that lookups reproduce a direct per-sample exit walk
// exactly; ratios are derived on query.
struct ExitTable {
    std::vector<int> branch_layers;
    std::vector<std::vector<double>> grids; // per branch, ascending
    int64_t samples = 0;

    // Flattened over the grid product, odometer order, first branch slowest.
    std::vector<int64_t> correct_total;                // correct at exit point
    std::vector<int64_t> final_correct_count;          // correct among full-pipeline completions
    std::vector<std::vector<int64_t>> reach;           // [branch][cell] samples reaching the branch
    std::vector<std::vector<int64_t>> survive;         // [branch][cell] samples continuing past it
    std::vector<std::vector<int64_t>> exit_correct;    // [branch][cell] correct among exits

    double a_min = 0.0;
    double a_max = 0.0;

    size_t branch_count() const { return branch_layers.size(); }
    size_t cell_count() const { return correct_total.size(); }
    size_t cell_index(const ThresholdSetting& c) const;

    // Grid index for an explicit threshold value; off-grid values are errors.
    int grid_index(size_t branch, double value) const;
    ThresholdSetting setting_from_values(const std::vector<double>& values) const;
    std::vector<double> setting_values(const ThresholdSetting& c) const;
    ThresholdSetting max_setting() const; // every branch at its top grid point
};

struct ExitQuery {
    double accuracy = 0.0;              // expected fraction of correct predictions
    std::vector<double> surviving;      // conditional surviving ratio per branch
    std::vector<double> exit_accuracy;  // accuracy among tasks exiting at each branch
    double final_accuracy = 0.0;        // accuracy among full-pipeline completions
};

struct AccuracyBounds {
    double a_min = 0.0;
    double a_max = 0.0;
};

// Difficulty profile for synthetic record sets.  Branch accuracies should be
// non-decreasing to mirror real early-exit models; confidence draws for
// correct predictions sit higher than for incorrect ones, with overlap.
struct SynthProfile {
    std::vector<int> branch_layers;
    int final_layer = 0;
    std::vector<double> branch_accuracy;
    double final_accuracy = 0.9;
    double conf_correct_lo = 0.40, conf_correct_hi = 0.995;
    double conf_wrong_lo = 0.02, conf_wrong_hi = 0.72;
};

std::vector<double> default_threshold_grid(); // 0.00, 0.05, ..., 1.00

ExitTable build_exit_table(const BranchRecordSet& records,
                           const std::vector<std::vector<double>>& grids);
ExitTable build_exit_table(const BranchRecordSet& records); // default grid everywhere

ExitQuery query(const ExitTable& table, const ThresholdSetting& c);
AccuracyBounds accuracy_bounds(const ExitTable& table);

// Surviving ratio by layer index 0..H for a pipeline of depth H: 1.0 at the
// source layer and at branchless layers, the table ratio at exit branches.
std::vector<double> layer_survival(const ExitTable& table, const ThresholdSetting& c, int layers);

SynthProfile default_synth_profile(const std::vector<int>& branch_layers, int final_layer);
BranchRecordSet synthesize_records(uint64_t seed, int64_t n, const SynthProfile& profile);

BranchRecordSet records_from_csv(const std::string& text);
std::string records_to_csv(const BranchRecordSet& records);

nlohmann::ordered_json table_to_json(const ExitTable& table);
ExitTable table_from_json(const nlohmann::json& j);

} // namespace epo
