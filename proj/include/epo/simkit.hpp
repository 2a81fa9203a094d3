#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epo/baselines.hpp"
#include "epo/dto.hpp"
#include "epo/model.hpp"

namespace epo {

// Egalitarian processor sharing: k resident tasks each drain at mu/k.
// Remaining work is advanced lazily to the query time.
class PsQueue {
public:
    explicit PsQueue(double mu = 1.0) : mu_(mu) {}

    void set_capacity(double mu, double now);
    void push(int64_t task, double work, double now);
    double next_departure() const; // +inf when idle
    std::vector<int64_t> pop_due(double now);
    size_t size() const { return active_.size(); }
    double backlog() const;

private:
    void advance(double now);

    double mu_ = 1.0;
    double last_ = 0.0;
    std::vector<std::pair<int64_t, double>> active_; // (task, remaining work)
};

// Independent reference for the same discipline: given a full arrival trace,
// departure times follow from the cumulative per-task service integral with
// breakpoints at arrivals and departures.  Arrivals must be time-ordered.
struct QueueArrival {
    double time = 0.0;
    double work = 0.0;
};
std::vector<double> queue_oracle(const std::vector<QueueArrival>& arrivals, double mu);

struct SimOptions {
    double duration = 60.0;
    double warmup_fraction = 0.1;
    const BranchRecordSet* replay_records = nullptr; // sample recorded walks instead of ratios
    bool collect_tasks = false;
};

struct TaskRecord {
    int64_t id = 0;
    double arrival = 0.0;
    double completion = 0.0;
    int exit_layer = 0; // layer the prediction was produced at
    bool correct = false;
};

struct SimReport {
    int64_t tasks_arrived = 0;
    int64_t tasks_completed = 0;
    int64_t tasks_in_flight = 0;
    int64_t tasks_measured = 0; // completions after warm-up removal
    double mean_delay = 0.0;    // seconds
    double p95_delay = 0.0;
    double accuracy = 0.0;
    std::vector<double> node_utilization; // admitted work rate over capacity
    double util_max = 0.0;
    std::vector<TaskRecord> tasks; // only with collect_tasks
};

SimReport run_simulation(const Scenario& s, const Strategy& p, const ThresholdSetting& c,
                         uint64_t seed, const SimOptions& opt);

struct AlgorithmSpec {
    enum class Kind { DtoEe, DtoFixed, Cf, Bf, Ngto, Ga };
    Kind kind = Kind::DtoEe;
    double fixed_threshold = 1.0;
    std::string label;
};

AlgorithmSpec parse_algorithm_spec(const std::string& name);

struct AlgorithmConfig {
    Strategy p;
    ThresholdSetting c;
};

// One configuration-phase outcome for the named algorithm.  c_prev seeds the
// threshold state (and is the frozen setting for the fixed variant); slot
// only diversifies the stochastic search.
AlgorithmConfig solve_algorithm(const Scenario& s, const AlgorithmSpec& alg,
                                const ThresholdSetting& c_prev, uint64_t seed, int slot,
                                const BaselineConfig& cfg = {});

// Grid setting with every branch at the same threshold value.
ThresholdSetting uniform_setting(const ExitTable& table, double value);

struct SlotReport {
    int slot = 0;
    std::string algorithm;
    int64_t tasks = 0;
    double mean_delay_ms = 0.0;
    double p95_delay_ms = 0.0;
    double mean_delay_excl_config_ms = 0.0;
    double accuracy = 0.0;
    double util_max = 0.0;
};

struct AlgorithmSummary {
    std::string algorithm;
    int64_t tasks = 0;
    double mean_delay_ms = 0.0;
    double accuracy = 0.0;
};

struct ExperimentResult {
    std::vector<SlotReport> slots;        // slot-major, algorithms in call order
    std::vector<AlgorithmSummary> summary;
};

// Multi-slot run with per-slot arrival-rate and capacity changes drawn from
// streams independent of the algorithm, so every algorithm faces identical
// realizations.  Each slot starts with a configuration phase whose result
// takes over after config_phase_ms; queues persist across slots.
ExperimentResult dynamic_experiment(const Scenario& s, const std::vector<AlgorithmSpec>& algs,
                                    int slots, uint64_t seed, const BaselineConfig& cfg = {});

// Threshold half of a configuration phase against a fixed strategy: the same
// update cadence the joint optimizer uses, driven by analytic gradients.
ThresholdSetting run_threshold_schedule(const Scenario& s, const Strategy& p, ThresholdSetting c);

std::string slot_reports_to_csv(const std::vector<SlotReport>& rows);
std::string group_reports_to_csv(const std::vector<SlotReport>& rows, int group_size);

} // namespace epo
