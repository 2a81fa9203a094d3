#include "epo/simkit.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "epo/analytics.hpp"
#include "epo/errors.hpp"
#include "epo/rng.hpp"
#include "epo/textio.hpp"

namespace epo {

namespace {
constexpr double kWorkTol = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();
} // namespace

void PsQueue::advance(double now) {
    if (now > last_ && !active_.empty()) {
        double drain = (now - last_) * mu_ / static_cast<double>(active_.size());
        for (auto& [task, rem] : active_) rem = std::max(0.0, rem - drain);
    }
    last_ = std::max(last_, now);
}

void PsQueue::set_capacity(double mu, double now) {
    advance(now);
    mu_ = mu;
}

void PsQueue::push(int64_t task, double work, double now) {
    advance(now);
    active_.emplace_back(task, work);
}

double PsQueue::next_departure() const {
    if (active_.empty()) return kInf;
    double least = kInf;
    for (const auto& [task, rem] : active_) least = std::min(least, rem);
    return last_ + least * static_cast<double>(active_.size()) / mu_;
}

std::vector<int64_t> PsQueue::pop_due(double now) {
    advance(now);
    // Rounding can leave a residue whose drain time is below the clock's
    // resolution at large timestamps; such a task must leave now or the
    // caller would spin on a departure time equal to now.
    double tol = kWorkTol;
    if (!active_.empty())
        tol = std::max(tol, 8.0 * std::numeric_limits<double>::epsilon() * std::abs(now) * mu_ /
                                static_cast<double>(active_.size()));
    std::vector<int64_t> done;
    size_t kept = 0;
    for (size_t k = 0; k < active_.size(); ++k) {
        if (active_[k].second <= tol)
            done.push_back(active_[k].first);
        else
            active_[kept++] = active_[k];
    }
    active_.resize(kept);
    return done;
}

double PsQueue::backlog() const {
    double total = 0.0;
    for (const auto& [task, rem] : active_) total += rem;
    return total;
}

std::vector<double> queue_oracle(const std::vector<QueueArrival>& arrivals, double mu) {
    if (mu <= 0.0) throw DomainError("queue capacity must be positive");
    for (size_t k = 1; k < arrivals.size(); ++k)
        if (arrivals[k].time < arrivals[k - 1].time)
            throw DomainError("arrival trace must be time-ordered");

    std::vector<double> dep(arrivals.size(), 0.0);
    // Milestones live on the cumulative-service axis: a task arriving when
    // every resident has received svc units departs once svc reaches its
    // arrival level plus its own work.
    std::multiset<std::pair<double, size_t>> active;
    double t = 0.0;
    double svc = 0.0;
    size_t next = 0;
    while (next < arrivals.size() || !active.empty()) {
        if (active.empty()) {
            t = std::max(t, arrivals[next].time);
            svc = 0.0;
            active.emplace(arrivals[next].work, next);
            ++next;
            continue;
        }
        auto head = *active.begin();
        double t_dep = t + std::max(0.0, head.first - svc) * static_cast<double>(active.size()) / mu;
        if (next < arrivals.size() && arrivals[next].time < t_dep) {
            svc += (arrivals[next].time - t) * mu / static_cast<double>(active.size());
            t = arrivals[next].time;
            active.emplace(svc + arrivals[next].work, next);
            ++next;
        } else {
            svc = head.first;
            t = t_dep;
            dep[head.second] = t;
            active.erase(active.begin());
        }
    }
    return dep;
}

namespace {

enum EventKind : int { kSlotMark = 0, kSwitch = 1, kArrival = 2, kTransfer = 3, kDeparture = 4 };

struct Event {
    double time = 0.0;
    int kind = 0;
    int64_t task = -1;
    int node = -1;
    uint64_t epoch = 0;
    uint64_t seq = 0;
};

struct LaterEvent {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) return a.time > b.time;
        if (a.kind != b.kind) return a.kind > b.kind;
        if (a.task != b.task) return a.task > b.task;
        return a.seq > b.seq;
    }
};

struct SimTask {
    double arrival = 0.0;
    double completion = -1.0;
    int slot = 0;
    bool during_config = false;
    int64_t sample = -1;
    int exit_layer = -1;
    bool correct = false;
};

struct SlotStat {
    int slot = 0;
    double start = 0.0;
    std::vector<double> admitted; // GFLOP pushed into each server during the slot
    std::vector<double> mu;
};

class SimEngine {
public:
    SimEngine(const Scenario& s, uint64_t seed, const SimOptions& opt) : s_(s), opt_(opt) {
        size_t n = s.nodes.size();
        queues_.assign(n, PsQueue(1.0));
        node_epoch_.assign(n, 0);
        ed_epoch_.assign(n, 0);
        rates_.assign(n, 0.0);
        mus_.assign(n, 0.0);
        for (const auto& nd : s.nodes) {
            arrival_rng_.push_back(Rng::substream(seed, nd.id, "arrival"));
            route_rng_.push_back(Rng::substream(seed, nd.id, "route"));
            exit_rng_.push_back(Rng::substream(seed, nd.id, "exit"));
            verdict_rng_.push_back(Rng::substream(seed, nd.id, "verdict"));
            sample_rng_.push_back(Rng::substream(seed, nd.id, "sample"));
        }
        if (opt.replay_records && opt.replay_records->size() <= 0)
            throw DomainError("replay requested with an empty record set");
    }

    void apply_config(const Strategy& p, const ThresholdSetting& c) {
        p_ = p;
        c_ = c;
        int H = s_.depth();
        keep_.assign(static_cast<size_t>(H) + 1, 1.0);
        exit_acc_.assign(static_cast<size_t>(H) + 1, 1.0);
        cval_.assign(static_cast<size_t>(H) + 1, 2.0); // above any confidence
        branch_index_.assign(static_cast<size_t>(H) + 1, -1);
        final_acc_ = 1.0;
        if (s_.exit_table) {
            const ExitTable& table = *s_.exit_table;
            ExitQuery q = query(table, c);
            std::vector<double> survival = layer_survival(table, c, H);
            std::vector<double> values = table.setting_values(c);
            for (size_t b = 0; b < table.branch_layers.size(); ++b) {
                size_t h = static_cast<size_t>(table.branch_layers[b]);
                keep_[h] = survival[h];
                exit_acc_[h] = q.exit_accuracy[b];
                cval_[h] = values[b];
                branch_index_[h] = static_cast<int>(b);
            }
            final_acc_ = q.final_accuracy;
        }
    }

    void schedule_switch(const Strategy& p, const ThresholdSetting& c, double when) {
        pending_.emplace_back(p, c);
        events_.push(Event{when, kSwitch, -1, -1, 0, seq_++});
    }

    void mark_slot(int slot, double start, double config_until) {
        current_slot_ = slot;
        config_until_ = config_until;
        SlotStat st;
        st.slot = slot;
        st.start = start;
        st.admitted.assign(s_.nodes.size(), 0.0);
        st.mu = mus_;
        slots_.push_back(std::move(st));
    }

    // Rate changes re-draw the next inter-arrival gap from the change point;
    // capacity changes drain the queue at the old speed first.
    void set_environment(const std::vector<double>& rates, const std::vector<double>& mus,
                         double now) {
        for (size_t j = 0; j < s_.nodes.size(); ++j) {
            if (s_.nodes[j].layer == 0) {
                rates_[j] = rates[j];
                ++ed_epoch_[j];
                schedule_arrival(static_cast<int>(j), now);
            } else if (mus[j] != mus_[j]) {
                queues_[j].set_capacity(mus[j], now);
                mus_[j] = mus[j];
                reschedule_departure(static_cast<int>(j));
            }
        }
        if (!slots_.empty()) slots_.back().mu = mus_;
    }

    void run_until(double t_end) {
        while (!events_.empty() && events_.top().time <= t_end) {
            Event e = events_.top();
            events_.pop();
            dispatch(e);
        }
        now_ = t_end;
    }

    const std::vector<SimTask>& tasks() const { return tasks_; }
    const std::vector<int64_t>& completion_order() const { return completion_order_; }
    const std::vector<SlotStat>& slots() const { return slots_; }
    const std::vector<double>& capacities() const { return mus_; }

private:
    void schedule_arrival(int i, double now) {
        if (rates_[static_cast<size_t>(i)] <= 0.0) return;
        double gap = arrival_rng_[static_cast<size_t>(i)].exponential(rates_[static_cast<size_t>(i)]);
        events_.push(Event{now + gap, kArrival, -1, i, ed_epoch_[static_cast<size_t>(i)], seq_++});
    }

    void reschedule_departure(int j) {
        uint64_t epoch = ++node_epoch_[static_cast<size_t>(j)];
        double when = queues_[static_cast<size_t>(j)].next_departure();
        if (when < kInf) events_.push(Event{when, kDeparture, -1, j, epoch, seq_++});
    }

    void dispatch(const Event& e) {
        switch (e.kind) {
        case kSwitch: {
            auto [p, c] = std::move(pending_.front());
            pending_.pop_front();
            apply_config(p, c);
            break;
        }
        case kArrival: {
            size_t i = static_cast<size_t>(e.node);
            if (e.epoch != ed_epoch_[i]) break;
            SimTask tk;
            tk.arrival = e.time;
            tk.slot = current_slot_;
            tk.during_config = e.time < config_until_;
            if (opt_.replay_records)
                tk.sample = static_cast<int64_t>(
                    sample_rng_[i].uniform_int(static_cast<uint64_t>(opt_.replay_records->size())));
            int64_t id = static_cast<int64_t>(tasks_.size());
            tasks_.push_back(tk);
            forward(id, e.node, e.time);
            schedule_arrival(e.node, e.time);
            break;
        }
        case kTransfer: {
            size_t j = static_cast<size_t>(e.node);
            int h = s_.nodes[j].layer;
            double work = s_.stage(h).alpha;
            slots_.back().admitted[j] += work;
            queues_[j].push(e.task, work, e.time);
            reschedule_departure(e.node);
            break;
        }
        case kDeparture: {
            size_t j = static_cast<size_t>(e.node);
            if (e.epoch != node_epoch_[j]) break;
            std::vector<int64_t> done = queues_[j].pop_due(e.time);
            for (int64_t id : done) finish_or_forward(id, e.node, e.time);
            reschedule_departure(e.node);
            break;
        }
        default:
            break;
        }
    }

    void finish_or_forward(int64_t id, int node, double now) {
        size_t j = static_cast<size_t>(node);
        size_t h = static_cast<size_t>(s_.nodes[j].layer);
        SimTask& tk = tasks_[static_cast<size_t>(id)];
        if (static_cast<int>(h) == s_.depth()) {
            bool correct = opt_.replay_records
                               ? opt_.replay_records->final_correct[static_cast<size_t>(tk.sample)] != 0
                               : verdict_rng_[j].bernoulli(final_acc_);
            complete(id, static_cast<int>(h), correct, now);
            return;
        }
        if (s_.stage(static_cast<int>(h)).has_exit) {
            bool exits;
            bool correct = false;
            if (opt_.replay_records) {
                size_t b = static_cast<size_t>(branch_index_[h]);
                double conf = opt_.replay_records->confidence[static_cast<size_t>(tk.sample)][b];
                exits = conf >= cval_[h];
                correct = opt_.replay_records->correct[static_cast<size_t>(tk.sample)][b] != 0;
            } else {
                exits = exit_rng_[j].bernoulli(1.0 - keep_[h]);
                if (exits) correct = verdict_rng_[j].bernoulli(exit_acc_[h]);
            }
            if (exits) {
                complete(id, static_cast<int>(h), correct, now);
                return;
            }
        }
        forward(id, node, now);
    }

    void forward(int64_t id, int node, double now) {
        size_t i = static_cast<size_t>(node);
        int h_next = s_.nodes[i].layer + 1;
        const std::vector<int>& out = s_.successors[i];
        size_t pick = route_rng_[i].categorical(p_.rows[i]);
        const Edge& edge = s_.edges[static_cast<size_t>(out[pick])];
        double delay = s_.stage(h_next).beta / edge.rate;
        events_.push(Event{now + delay, kTransfer, id, edge.to, 0, seq_++});
    }

    void complete(int64_t id, int layer, bool correct, double now) {
        SimTask& tk = tasks_[static_cast<size_t>(id)];
        tk.completion = now;
        tk.exit_layer = layer;
        tk.correct = correct;
        completion_order_.push_back(id);
    }

    const Scenario& s_;
    SimOptions opt_;

    Strategy p_;
    ThresholdSetting c_;
    std::vector<double> keep_;
    std::vector<double> exit_acc_;
    std::vector<double> cval_;
    std::vector<int> branch_index_;
    double final_acc_ = 1.0;

    std::vector<PsQueue> queues_;
    std::vector<uint64_t> node_epoch_;
    std::vector<uint64_t> ed_epoch_;
    std::vector<double> rates_;
    std::vector<double> mus_;

    std::vector<Rng> arrival_rng_, route_rng_, exit_rng_, verdict_rng_, sample_rng_;

    std::priority_queue<Event, std::vector<Event>, LaterEvent> events_;
    std::deque<std::pair<Strategy, ThresholdSetting>> pending_;
    uint64_t seq_ = 0;

    std::vector<SimTask> tasks_;
    std::vector<int64_t> completion_order_;
    std::vector<SlotStat> slots_;
    int current_slot_ = 0;
    double config_until_ = 0.0;
    double now_ = 0.0;
};

double percentile95(std::vector<double>& delays) {
    if (delays.empty()) return 0.0;
    std::sort(delays.begin(), delays.end());
    size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(delays.size())));
    if (rank == 0) rank = 1;
    return delays[std::min(delays.size() - 1, rank - 1)];
}

} // namespace

ThresholdSetting uniform_setting(const ExitTable& table, double value) {
    return table.setting_from_values(std::vector<double>(table.branch_layers.size(), value));
}

SimReport run_simulation(const Scenario& s, const Strategy& p, const ThresholdSetting& c,
                         uint64_t seed, const SimOptions& opt) {
    auto diags = validate_strategy(s, p);
    if (has_errors(diags)) throw DomainError(format_diagnostics(diags));

    SimEngine eng(s, seed, opt);
    std::vector<double> rates(s.nodes.size(), 0.0), mus(s.nodes.size(), 0.0);
    for (size_t j = 0; j < s.nodes.size(); ++j) {
        rates[j] = s.nodes[j].arrival_rate;
        mus[j] = s.nodes[j].mu;
    }
    eng.apply_config(p, c);
    eng.mark_slot(0, 0.0, 0.0);
    eng.set_environment(rates, mus, 0.0);
    eng.run_until(opt.duration);

    const auto& tasks = eng.tasks();
    const auto& order = eng.completion_order();

    SimReport rep;
    rep.tasks_arrived = static_cast<int64_t>(tasks.size());
    rep.tasks_completed = static_cast<int64_t>(order.size());
    rep.tasks_in_flight = rep.tasks_arrived - rep.tasks_completed;

    size_t cut = static_cast<size_t>(opt.warmup_fraction * static_cast<double>(order.size()));
    std::vector<double> delays;
    int64_t correct = 0;
    for (size_t k = cut; k < order.size(); ++k) {
        const SimTask& tk = tasks[static_cast<size_t>(order[k])];
        delays.push_back(tk.completion - tk.arrival);
        if (tk.correct) ++correct;
    }
    rep.tasks_measured = static_cast<int64_t>(delays.size());
    if (!delays.empty()) {
        double total = 0.0;
        for (double d : delays) total += d;
        rep.mean_delay = total / static_cast<double>(delays.size());
        rep.accuracy = static_cast<double>(correct) / static_cast<double>(delays.size());
        rep.p95_delay = percentile95(delays);
    }

    rep.node_utilization.assign(s.nodes.size(), 0.0);
    const auto& slot = eng.slots().front();
    for (size_t j = 0; j < s.nodes.size(); ++j) {
        if (s.nodes[j].layer == 0 || opt.duration <= 0.0) continue;
        rep.node_utilization[j] = slot.admitted[j] / (opt.duration * mus[j]);
        rep.util_max = std::max(rep.util_max, rep.node_utilization[j]);
    }

    if (opt.collect_tasks) {
        for (int64_t id : order) {
            const SimTask& tk = tasks[static_cast<size_t>(id)];
            rep.tasks.push_back(TaskRecord{id, tk.arrival, tk.completion, tk.exit_layer, tk.correct});
        }
    }
    return rep;
}

AlgorithmSpec parse_algorithm_spec(const std::string& name) {
    AlgorithmSpec spec;
    spec.label = name;
    if (name == "dto-ee") {
        spec.kind = AlgorithmSpec::Kind::DtoEe;
    } else if (name.rfind("dto-fixed:", 0) == 0) {
        spec.kind = AlgorithmSpec::Kind::DtoFixed;
        try {
            spec.fixed_threshold = std::stod(name.substr(10));
        } catch (const std::exception&) {
            throw ParseError("bad fixed threshold in algorithm name: " + name);
        }
    } else if (name == "cf") {
        spec.kind = AlgorithmSpec::Kind::Cf;
    } else if (name == "bf") {
        spec.kind = AlgorithmSpec::Kind::Bf;
    } else if (name == "ngto") {
        spec.kind = AlgorithmSpec::Kind::Ngto;
    } else if (name == "ga") {
        spec.kind = AlgorithmSpec::Kind::Ga;
    } else {
        throw ParseError("unknown algorithm name: " + name);
    }
    return spec;
}

ThresholdSetting run_threshold_schedule(const Scenario& s, const Strategy& p, ThresholdSetting c) {
    if (!s.exit_table || s.exit_table->branch_layers.empty()) return c;
    RoundState st = init_round_state(s, p, c);
    const int H = s.depth();
    for (int t = 0; t < s.params.n; ++t) {
        if (t % s.params.m != 0) continue;
        int h = (t / s.params.m) % H;
        if (h < 1 || !s.stage(h).has_exit) continue;
        for (int hh = 1; hh <= H; ++hh) {
            for (int i : s.layer_nodes[static_cast<size_t>(hh - 1)]) emit_rur(st, i);
            for (int j : s.layer_nodes[static_cast<size_t>(hh)]) collect_rur(st, j);
        }
        for (int hh = H; hh >= 1; --hh)
            for (int j : s.layer_nodes[static_cast<size_t>(hh)]) receiver_round(st, j);
        if (st.survival[static_cast<size_t>(h)] > 0.0) threshold_round(st, h);
    }
    return st.c;
}

AlgorithmConfig solve_algorithm(const Scenario& env, const AlgorithmSpec& alg,
                                const ThresholdSetting& c_prev, uint64_t seed, int slot,
                                const BaselineConfig& cfg) {
    switch (alg.kind) {
    case AlgorithmSpec::Kind::DtoEe: {
        ConfigResult r = run_config_phase(env, uniform_strategy(env), c_prev, false);
        return {r.strategy, r.thresholds};
    }
    case AlgorithmSpec::Kind::DtoFixed: {
        ConfigResult r = run_config_phase(env, uniform_strategy(env), c_prev, true);
        return {r.strategy, c_prev};
    }
    case AlgorithmSpec::Kind::Cf: {
        Strategy p = cf_strategy(env);
        return {p, run_threshold_schedule(env, p, c_prev)};
    }
    case AlgorithmSpec::Kind::Bf: {
        Strategy p = bf_strategy(env);
        return {p, run_threshold_schedule(env, p, c_prev)};
    }
    case AlgorithmSpec::Kind::Ngto: {
        std::vector<double> survival = layer_survival(*env.exit_table, c_prev, env.depth());
        Strategy p = ngto_solve(env, survival, cfg).strategy;
        return {p, run_threshold_schedule(env, p, c_prev)};
    }
    case AlgorithmSpec::Kind::Ga:
    default: {
        std::vector<double> survival = layer_survival(*env.exit_table, c_prev, env.depth());
        uint64_t ga_seed = Rng::mix(Rng::mix(seed, Rng::hash_str("ga")), static_cast<uint64_t>(slot));
        Strategy p = ga_solve(env, survival, ga_seed, cfg).strategy;
        return {p, run_threshold_schedule(env, p, c_prev)};
    }
    }
}

ExperimentResult dynamic_experiment(const Scenario& s, const std::vector<AlgorithmSpec>& algs,
                                    int slots, uint64_t seed, const BaselineConfig& cfg) {
    if (slots <= 0) throw DomainError("experiment needs at least one slot");
    if (!s.exit_table) throw DomainError("experiment needs an exit table");
    const ExitTable& table = *s.exit_table;
    const double L = s.params.slot_seconds;
    const double config_s = s.params.config_phase_ms / 1000.0;
    const size_t n = s.nodes.size();

    // Environment realizations are drawn from streams keyed only by the
    // scenario seed and node, so every algorithm sees the same sequence.
    std::vector<std::vector<double>> env_rate(static_cast<size_t>(slots), std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> env_mu(static_cast<size_t>(slots), std::vector<double>(n, 0.0));
    for (size_t j = 0; j < n; ++j) {
        const NodeSpec& nd = s.nodes[j];
        Rng rate_rng = Rng::substream(seed, nd.id, "env-rate");
        Rng mode_rng = Rng::substream(seed, nd.id, "env-mode");
        for (int t = 0; t < slots; ++t) {
            if (nd.layer == 0) {
                env_rate[static_cast<size_t>(t)][j] = nd.arrival_rate * rate_rng.uniform(0.5, 1.5);
            } else {
                env_mu[static_cast<size_t>(t)][j] =
                    nd.modes.empty() ? nd.mu
                                     : nd.modes[mode_rng.uniform_int(nd.modes.size())];
            }
        }
    }

    std::vector<std::vector<SlotReport>> per_alg(algs.size());
    std::vector<AlgorithmSummary> summary;

    for (size_t ai = 0; ai < algs.size(); ++ai) {
        const AlgorithmSpec& alg = algs[ai];
        Scenario env = s;
        SimOptions opt;
        opt.duration = L * slots;
        SimEngine eng(s, seed, opt);

        ThresholdSetting c_cur = alg.kind == AlgorithmSpec::Kind::DtoFixed
                                     ? uniform_setting(table, alg.fixed_threshold)
                                     : table.max_setting();
        Strategy p_cur = uniform_strategy(s);
        eng.apply_config(p_cur, c_cur);

        for (int t = 0; t < slots; ++t) {
            double t0 = L * t;
            if (t > 0) eng.run_until(t0);
            eng.set_environment(env_rate[static_cast<size_t>(t)], env_mu[static_cast<size_t>(t)], t0);
            eng.mark_slot(t, t0, t0 + config_s);
            for (size_t j = 0; j < n; ++j) {
                if (s.nodes[j].layer == 0)
                    env.nodes[j].arrival_rate = env_rate[static_cast<size_t>(t)][j];
                else
                    env.nodes[j].mu = env_mu[static_cast<size_t>(t)][j];
            }
            AlgorithmConfig next = solve_algorithm(env, alg, c_cur, seed, t, cfg);
            eng.schedule_switch(next.p, next.c, t0 + config_s);
            p_cur = next.p;
            c_cur = next.c;
        }
        eng.run_until(L * slots);

        // Attribute completions to the slot the task arrived in.
        struct Bucket {
            std::vector<double> delays;
            double delay_sum = 0.0;
            double excl_sum = 0.0;
            int64_t excl_count = 0;
            int64_t correct = 0;
        };
        std::vector<Bucket> buckets(static_cast<size_t>(slots));
        double total_delay = 0.0;
        int64_t total_tasks = 0, total_correct = 0;
        for (const SimTask& tk : eng.tasks()) {
            if (tk.completion < 0.0) continue;
            Bucket& b = buckets[static_cast<size_t>(tk.slot)];
            double d = tk.completion - tk.arrival;
            b.delays.push_back(d);
            b.delay_sum += d;
            if (!tk.during_config) {
                b.excl_sum += d;
                ++b.excl_count;
            }
            if (tk.correct) ++b.correct;
            total_delay += d;
            ++total_tasks;
            if (tk.correct) ++total_correct;
        }

        per_alg[ai].resize(static_cast<size_t>(slots));
        for (int t = 0; t < slots; ++t) {
            Bucket& b = buckets[static_cast<size_t>(t)];
            SlotReport& row = per_alg[ai][static_cast<size_t>(t)];
            row.slot = t;
            row.algorithm = alg.label;
            row.tasks = static_cast<int64_t>(b.delays.size());
            if (row.tasks > 0) {
                row.mean_delay_ms = 1000.0 * b.delay_sum / static_cast<double>(row.tasks);
                row.p95_delay_ms = 1000.0 * percentile95(b.delays);
                row.accuracy = static_cast<double>(b.correct) / static_cast<double>(row.tasks);
            }
            if (b.excl_count > 0)
                row.mean_delay_excl_config_ms = 1000.0 * b.excl_sum / static_cast<double>(b.excl_count);
            const SlotStat& st = eng.slots()[static_cast<size_t>(t)];
            for (size_t j = 0; j < n; ++j) {
                if (s.nodes[j].layer == 0) continue;
                row.util_max = std::max(row.util_max, st.admitted[j] / (L * st.mu[j]));
            }
        }

        AlgorithmSummary sum;
        sum.algorithm = alg.label;
        sum.tasks = total_tasks;
        if (total_tasks > 0) {
            sum.mean_delay_ms = 1000.0 * total_delay / static_cast<double>(total_tasks);
            sum.accuracy = static_cast<double>(total_correct) / static_cast<double>(total_tasks);
        }
        summary.push_back(sum);
    }

    ExperimentResult result;
    for (int t = 0; t < slots; ++t)
        for (size_t ai = 0; ai < algs.size(); ++ai)
            result.slots.push_back(per_alg[ai][static_cast<size_t>(t)]);
    result.summary = std::move(summary);
    return result;
}

std::string slot_reports_to_csv(const std::vector<SlotReport>& rows) {
    std::ostringstream out;
    out << "slot,algorithm,mean_delay_ms,p95_delay_ms,accuracy,tasks,util_max,"
           "mean_delay_excl_config_ms\n";
    for (const SlotReport& r : rows) {
        out << r.slot << ',' << r.algorithm << ',' << fmt6(r.mean_delay_ms) << ','
            << fmt6(r.p95_delay_ms) << ',' << fmt6(r.accuracy) << ',' << r.tasks << ','
            << fmt6(r.util_max) << ',' << fmt6(r.mean_delay_excl_config_ms) << '\n';
    }
    return out.str();
}

std::string group_reports_to_csv(const std::vector<SlotReport>& rows, int group_size) {
    if (group_size <= 0) throw DomainError("group size must be positive");
    struct Key {
        int group;
        std::string algorithm;
        bool operator<(const Key& o) const {
            if (group != o.group) return group < o.group;
            return algorithm < o.algorithm;
        }
    };
    struct Agg {
        int64_t tasks = 0;
        double delay_weighted = 0.0;
        double accuracy_weighted = 0.0;
        int slots = 0;
    };
    std::map<Key, Agg> groups;
    std::vector<Key> order;
    for (const SlotReport& r : rows) {
        Key key{r.slot / group_size, r.algorithm};
        auto it = groups.find(key);
        if (it == groups.end()) {
            it = groups.emplace(key, Agg{}).first;
            order.push_back(key);
        }
        Agg& a = it->second;
        a.tasks += r.tasks;
        a.delay_weighted += r.mean_delay_ms * static_cast<double>(r.tasks);
        a.accuracy_weighted += r.accuracy * static_cast<double>(r.tasks);
        a.slots += 1;
    }
    std::ostringstream out;
    out << "group,algorithm,slots,tasks,mean_delay_ms,accuracy\n";
    for (const Key& key : order) {
        const Agg& a = groups[key];
        double denom = a.tasks > 0 ? static_cast<double>(a.tasks) : 1.0;
        out << key.group << ',' << key.algorithm << ',' << a.slots << ',' << a.tasks << ','
            << fmt6(a.delay_weighted / denom) << ',' << fmt6(a.accuracy_weighted / denom) << '\n';
    }
    return out.str();
}

} // namespace epo
