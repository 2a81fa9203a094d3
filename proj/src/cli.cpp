#include "epo/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <thread>

#include "epo/analytics.hpp"
#include "epo/baselines.hpp"
#include "epo/dto.hpp"
#include "epo/errors.hpp"
#include "epo/instancegen.hpp"
#include "epo/manifest.hpp"
#include "epo/rng.hpp"
#include "epo/simkit.hpp"
#include "epo/textio.hpp"

namespace epo {

namespace {

// Reports carry six significant digits; rounding before serialization keeps
// the JSON encoder's shortest-round-trip output stable.
double round6(double x) {
    return std::stod(fmt6(x));
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : text) {
        if (ch == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

RunManifest base_manifest(const CliCommon& args, const Scenario& s, const std::string& command) {
    RunManifest m;
    m.command = command;
    m.seed = s.seed;
    m.inputs = s.source_files;
    m.overrides = args.sets;
    return m;
}

nlohmann::ordered_json node_report(const Scenario& s, const FlowState& flow) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (size_t j = 0; j < s.nodes.size(); ++j) {
        if (s.nodes[j].layer == 0) continue;
        nlohmann::ordered_json nj;
        nj["id"] = s.nodes[j].id;
        nj["layer"] = s.nodes[j].layer;
        nj["mu"] = round6(s.nodes[j].mu);
        nj["lambda"] = round6(flow.lambda[j]);
        nj["utilization"] = round6(flow.lambda[j] / s.nodes[j].mu);
        nodes.push_back(nj);
    }
    return nodes;
}

} // namespace

bool log_enabled() {
    static const bool enabled = [] {
        const char* v = std::getenv("EPO_LOG");
        return v != nullptr && *v != '\0';
    }();
    return enabled;
}

void log_line(const std::string& text) {
    if (log_enabled()) std::cerr << "[epo] " << text << '\n';
}

void apply_override(Scenario& s, const std::string& key, const std::string& value) {
    auto as_double = [&]() {
        try {
            size_t used = 0;
            double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw ParseError("override " + key + ": not a number: " + value);
        }
    };
    auto as_int = [&]() {
        try {
            size_t used = 0;
            int v = std::stoi(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw ParseError("override " + key + ": not an integer: " + value);
        }
    };
    auto as_bool = [&]() {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw ParseError("override " + key + ": not a boolean: " + value);
    };

    if (key == "seed") {
        try {
            s.seed = std::stoull(value);
        } catch (const std::exception&) {
            throw ParseError("override seed: not an unsigned integer: " + value);
        }
    } else if (key == "params.a") {
        s.params.a = as_double();
    } else if (key == "params.K") {
        s.params.K = as_double();
    } else if (key == "params.epsilon") {
        s.params.epsilon = as_double();
    } else if (key == "params.tau_p") {
        s.params.tau_p = as_double();
    } else if (key == "params.tau_c") {
        s.params.tau_c = as_int();
    } else if (key == "params.m") {
        s.params.m = as_int();
    } else if (key == "params.n") {
        s.params.n = as_int();
    } else if (key == "params.slot_seconds") {
        s.params.slot_seconds = as_double();
    } else if (key == "params.config_phase_ms") {
        s.params.config_phase_ms = as_double();
    } else if (key == "params.comm_delay_ms") {
        s.params.comm_delay_ms = as_double();
    } else if (key == "params.backtrack") {
        s.params.backtrack = as_bool();
    } else if (key == "params.early_stop") {
        s.params.early_stop = as_bool();
    } else {
        throw ParseError("unknown override key: " + key);
    }
}

namespace {

void apply_all_overrides(Scenario& s, const CliCommon& args) {
    for (const std::string& kv : args.sets) {
        size_t pos = kv.find('=');
        if (pos == std::string::npos) throw ParseError("override must be key=value: " + kv);
        apply_override(s, kv.substr(0, pos), kv.substr(pos + 1));
    }
    if (args.has_seed) s.seed = args.seed;
}

} // namespace

Scenario load_for_run(const CliCommon& args) {
    Scenario s = load_scenario(args.scenario);
    apply_all_overrides(s, args);
    std::vector<Diagnostic> diags = validate_scenario(s);
    for (const Diagnostic& d : diags)
        if (d.severity == Diagnostic::Severity::Warning)
            std::cerr << "warning: " << d.message << '\n';
    if (has_errors(diags)) throw DomainError(format_diagnostics(diags));
    return s;
}

int cmd_validate(const CliCommon& args) {
    // The manifest is written before parsing so a rejected document still
    // leaves a fingerprint of what was checked.
    ensure_dir(args.out);
    RunManifest m;
    m.command = "validate";
    m.inputs = {args.scenario};
    m.overrides = args.sets;

    std::string text;
    bool ok = false;
    try {
        Scenario s = load_scenario(args.scenario);
        apply_all_overrides(s, args);
        m.seed = s.seed;
        m.inputs = s.source_files;
        write_manifest(args.out, m);
        std::vector<Diagnostic> diags = validate_scenario(s);
        text = format_diagnostics(diags);
        ok = !has_errors(diags);
    } catch (const ParseError& e) {
        write_manifest(args.out, m);
        text = "error: " + std::string(e.what()) + "\n";
    }
    text += ok ? "valid\n" : "invalid\n";
    std::cout << text;
    write_file(args.out + "/diagnostics.txt", text);
    return ok ? 0 : 1;
}

int cmd_exit_table(const std::string& records_csv, const std::string& grid_arg,
                   const std::string& out) {
    BranchRecordSet records = records_from_csv(read_file(records_csv));

    std::vector<double> grid;
    if (grid_arg.empty()) {
        grid = default_threshold_grid();
    } else {
        std::stringstream ss(grid_arg);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                size_t used = 0;
                double v = std::stod(item, &used);
                if (used != item.size()) throw std::invalid_argument(item);
                grid.push_back(v);
            } catch (const std::exception&) {
                throw ParseError("bad grid value: " + item);
            }
        }
        if (grid.empty()) throw ParseError("grid spec is empty");
        for (size_t i = 1; i < grid.size(); ++i)
            if (grid[i] <= grid[i - 1]) throw ParseError("grid values must be strictly ascending");
    }

    std::vector<std::vector<double>> grids(records.branch_layers.size(), grid);
    ExitTable table = build_exit_table(records, grids);

    ensure_dir(out);
    RunManifest m;
    m.command = "exit-table";
    m.inputs = {records_csv};
    m.arguments["grid"] = grid_arg.empty() ? "default" : grid_arg;
    write_manifest(out, m);
    write_file(out + "/exit_table.json", table_to_json(table).dump(2) + "\n");

    std::ostringstream line;
    line << "branches=" << table.branch_count() << " cells=" << table.cell_count()
         << " samples=" << table.samples << " A_min=" << fmt6(table.a_min)
         << " A_max=" << fmt6(table.a_max) << "\n";
    std::cout << line.str();
    return 0;
}

namespace {

nlohmann::ordered_json objective_report(const Scenario& s, const Strategy& p,
                                        const ThresholdSetting& c, const std::string& algorithm) {
    const ExitTable& table = *s.exit_table;
    std::vector<double> survival = layer_survival(table, c, s.depth());
    FlowState flow = propagate_flows(s, p, survival);
    Objective o = objective_R(s, p, survival);
    ExitQuery q = query(table, c);
    AccuracyBounds bounds = accuracy_bounds(table);

    nlohmann::ordered_json j;
    j["algorithm"] = algorithm;
    j["R"] = round6(o.R);
    j["T"] = round6(o.T);
    j["N"] = round6(o.N);
    j["mean_delay_ms"] = round6(1000.0 * o.T);
    if (bounds.a_max > bounds.a_min)
        j["U"] = round6(utility_U(o.T, q.accuracy, s.params.a, bounds));
    else
        j["U"] = nullptr;
    j["accuracy"] = round6(q.accuracy);
    j["accuracy_bounds"] = {round6(bounds.a_min), round6(bounds.a_max)};
    j["total_arrival_rate"] = round6(flow.Phi);
    j["nodes"] = node_report(s, flow);
    return j;
}

} // namespace

int cmd_optimize(const CliCommon& args, const std::string& algorithm) {
    Scenario s = load_for_run(args);
    AlgorithmSpec alg = parse_algorithm_spec(algorithm);
    const ExitTable& table = *s.exit_table;

    ensure_dir(args.out);
    RunManifest m = base_manifest(args, s, "optimize");
    m.arguments["algorithm"] = algorithm;
    write_manifest(args.out, m);

    ThresholdSetting c0 = alg.kind == AlgorithmSpec::Kind::DtoFixed
                              ? uniform_setting(table, alg.fixed_threshold)
                              : table.max_setting();
    Strategy p;
    ThresholdSetting c;
    std::vector<TraceRow> trace;
    if (alg.kind == AlgorithmSpec::Kind::DtoEe || alg.kind == AlgorithmSpec::Kind::DtoFixed) {
        ConfigResult r = run_config_phase(s, uniform_strategy(s), c0,
                                          alg.kind == AlgorithmSpec::Kind::DtoFixed);
        p = r.strategy;
        c = r.thresholds;
        trace = r.trace;
        log_line("configuration phase ran " + std::to_string(r.rounds_run) + " rounds");
    } else {
        AlgorithmConfig r = solve_algorithm(s, alg, c0, s.seed, 0);
        p = r.p;
        c = r.c;
    }

    write_file(args.out + "/strategy.json", strategy_to_json(s, p).dump(2) + "\n");
    write_file(args.out + "/thresholds.json", thresholds_to_json(s, c).dump(2) + "\n");
    if (!trace.empty()) write_file(args.out + "/trace.csv", trace_to_csv(trace));
    nlohmann::ordered_json report = objective_report(s, p, c, algorithm);
    write_file(args.out + "/report.json", report.dump(2) + "\n");

    std::cout << algorithm << " R=" << report["R"].dump() << " mean_delay_ms="
              << report["mean_delay_ms"].dump() << " accuracy=" << report["accuracy"].dump()
              << '\n';
    return 0;
}

int cmd_simulate(const CliCommon& args, const std::string& algorithm, double duration,
                 const std::string& records_csv) {
    Scenario s = load_for_run(args);
    AlgorithmSpec alg = parse_algorithm_spec(algorithm);
    const ExitTable& table = *s.exit_table;

    ensure_dir(args.out);
    RunManifest m = base_manifest(args, s, "simulate");
    m.arguments["algorithm"] = algorithm;
    m.arguments["duration"] = duration;
    if (!records_csv.empty()) {
        m.arguments["records"] = records_csv;
        m.inputs.push_back(records_csv);
    }
    write_manifest(args.out, m);

    ThresholdSetting c0 = alg.kind == AlgorithmSpec::Kind::DtoFixed
                              ? uniform_setting(table, alg.fixed_threshold)
                              : table.max_setting();
    AlgorithmConfig cfg = solve_algorithm(s, alg, c0, s.seed, 0);

    BranchRecordSet replay;
    SimOptions opt;
    opt.duration = duration;
    if (!records_csv.empty()) {
        replay = records_from_csv(read_file(records_csv));
        opt.replay_records = &replay;
    }
    SimReport rep = run_simulation(s, cfg.p, cfg.c, s.seed, opt);

    write_file(args.out + "/strategy.json", strategy_to_json(s, cfg.p).dump(2) + "\n");
    write_file(args.out + "/thresholds.json", thresholds_to_json(s, cfg.c).dump(2) + "\n");

    std::vector<double> survival = layer_survival(table, cfg.c, s.depth());
    Objective o = objective_R(s, cfg.p, survival);
    ExitQuery q = query(table, cfg.c);

    nlohmann::ordered_json j;
    j["algorithm"] = algorithm;
    j["duration"] = duration;
    j["seed"] = s.seed;
    j["tasks"] = {{"arrived", rep.tasks_arrived},
                  {"completed", rep.tasks_completed},
                  {"in_flight", rep.tasks_in_flight},
                  {"measured", rep.tasks_measured}};
    j["mean_delay_ms"] = round6(1000.0 * rep.mean_delay);
    j["p95_delay_ms"] = round6(1000.0 * rep.p95_delay);
    j["accuracy"] = round6(rep.accuracy);
    j["util_max"] = round6(rep.util_max);
    j["analytic"] = {{"mean_delay_ms", round6(1000.0 * o.T)}, {"accuracy", round6(q.accuracy)}};
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (size_t k = 0; k < s.nodes.size(); ++k) {
        if (s.nodes[k].layer == 0) continue;
        nodes.push_back({{"id", s.nodes[k].id}, {"utilization", round6(rep.node_utilization[k])}});
    }
    j["nodes"] = nodes;
    write_file(args.out + "/sim_report.json", j.dump(2) + "\n");

    std::cout << algorithm << " mean_delay_ms=" << j["mean_delay_ms"].dump()
              << " p95_delay_ms=" << j["p95_delay_ms"].dump()
              << " accuracy=" << j["accuracy"].dump() << " tasks=" << rep.tasks_measured << '\n';
    return 0;
}

int cmd_experiment(const CliCommon& args, const std::vector<std::string>& algorithms, int slots,
                   int seeds, int workers) {
    Scenario s = load_for_run(args);
    std::vector<std::string> names = algorithms;
    if (names.empty()) names = {"dto-ee", "cf", "bf", "ngto", "ga"};
    std::vector<AlgorithmSpec> specs;
    for (const std::string& name : names) specs.push_back(parse_algorithm_spec(name));
    int replicas = seeds;
    if (replicas < 1) throw DomainError("seeds must be at least 1");

    ensure_dir(args.out);
    RunManifest m = base_manifest(args, s, "experiment");
    nlohmann::ordered_json alg_json = nlohmann::ordered_json::array();
    for (const std::string& name : names) alg_json.push_back(name);
    m.arguments["algorithms"] = alg_json;
    m.arguments["slots"] = slots;
    m.arguments["seeds"] = seeds;
    write_manifest(args.out, m);

    // Replicas fan out over a worker pool; results land in slots keyed by
    // replica index, so the merge order never depends on scheduling.
    std::vector<ExperimentResult> results(static_cast<size_t>(replicas));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(replicas));
    std::atomic<int> next{0};
    auto work = [&]() {
        for (;;) {
            int k = next.fetch_add(1);
            if (k >= replicas) return;
            try {
                uint64_t seed = k == 0 ? s.seed : Rng::mix(s.seed, static_cast<uint64_t>(k));
                log_line("replica " + std::to_string(k) + " started");
                results[static_cast<size_t>(k)] = dynamic_experiment(s, specs, slots, seed);
                log_line("replica " + std::to_string(k) + " finished");
            } catch (...) {
                errors[static_cast<size_t>(k)] = std::current_exception();
                return;
            }
        }
    };
    int pool = std::max(1, std::min(workers, replicas));
    std::vector<std::thread> threads;
    for (int w = 1; w < pool; ++w) threads.emplace_back(work);
    work();
    for (std::thread& t : threads) t.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);

    std::ostringstream slots_csv;
    slots_csv << "seed_index,slot,algorithm,mean_delay_ms,p95_delay_ms,accuracy,tasks,util_max,"
                 "mean_delay_excl_config_ms\n";
    for (int k = 0; k < replicas; ++k) {
        std::vector<std::string> lines =
            split_lines(slot_reports_to_csv(results[static_cast<size_t>(k)].slots));
        for (size_t li = 1; li < lines.size(); ++li) slots_csv << k << ',' << lines[li] << '\n';
    }
    write_file(args.out + "/slots.csv", slots_csv.str());

    std::ostringstream groups_csv;
    groups_csv << "seed_index,group,algorithm,slots,tasks,mean_delay_ms,accuracy\n";
    for (int k = 0; k < replicas; ++k) {
        std::vector<std::string> lines =
            split_lines(group_reports_to_csv(results[static_cast<size_t>(k)].slots, 10));
        for (size_t li = 1; li < lines.size(); ++li) groups_csv << k << ',' << lines[li] << '\n';
    }
    write_file(args.out + "/groups.csv", groups_csv.str());

    nlohmann::ordered_json summary;
    summary["slots"] = slots;
    summary["seeds"] = seeds;
    nlohmann::ordered_json algs = nlohmann::ordered_json::array();
    for (size_t ai = 0; ai < specs.size(); ++ai) {
        nlohmann::ordered_json aj;
        aj["algorithm"] = names[ai];
        nlohmann::ordered_json reps = nlohmann::ordered_json::array();
        std::vector<double> delays, accs;
        for (int k = 0; k < replicas; ++k) {
            const AlgorithmSummary& sum = results[static_cast<size_t>(k)].summary[ai];
            reps.push_back({{"seed_index", k},
                            {"tasks", sum.tasks},
                            {"mean_delay_ms", round6(sum.mean_delay_ms)},
                            {"accuracy", round6(sum.accuracy)}});
            delays.push_back(sum.mean_delay_ms);
            accs.push_back(sum.accuracy);
        }
        aj["runs"] = reps;
        aj["median_mean_delay_ms"] = round6(median(delays));
        aj["median_accuracy"] = round6(median(accs));
        algs.push_back(aj);
        std::cout << names[ai] << " median_mean_delay_ms=" << fmt6(median(delays))
                  << " median_accuracy=" << fmt6(median(accs)) << '\n';
    }
    summary["algorithms"] = algs;
    write_file(args.out + "/summary.json", summary.dump(2) + "\n");
    return 0;
}

int cmd_gradcheck(const std::string& out, uint64_t seed, int instances) {
    ensure_dir(out);
    RunManifest m;
    m.command = "gradcheck";
    m.seed = seed;
    m.arguments["instances"] = instances;
    write_manifest(out, m);

    std::ostringstream csv;
    csv << "instance,nodes,edges,max_abs_err,max_rel_err,pass\n";
    double worst_rel = 0.0;
    int failures = 0;
    for (int i = 0; i < instances; ++i) {
        uint64_t inst_seed = Rng::mix(seed, static_cast<uint64_t>(i));
        Scenario s = random_instance(inst_seed);
        const ExitTable& table = *s.exit_table;
        ThresholdSetting c = table.max_setting();
        if (i % 2 == 1)
            for (size_t b = 0; b < c.idx.size(); ++b) c.idx[b] /= 2;
        std::vector<double> survival = layer_survival(table, c, s.depth());
        Strategy p = feasible_random_strategy(s, survival, inst_seed);

        GradientField g = compute_gradients(s, p, survival);
        double max_abs = 0.0, max_rel = 0.0;
        bool pass = true;
        for (size_t e = 0; e < s.edges.size(); ++e) {
            double fd = fd_gradient_oracle(s, p, survival, static_cast<int>(e), 1e-6);
            double err = std::abs(g.dR_dp[e] - fd);
            max_abs = std::max(max_abs, err);
            max_rel = std::max(max_rel, err / std::max(std::abs(fd), 1e-9));
            if (err > std::max(1e-4 * std::abs(fd), 1e-9)) pass = false;
        }
        worst_rel = std::max(worst_rel, max_rel);
        if (!pass) ++failures;
        csv << i << ',' << s.nodes.size() << ',' << s.edges.size() << ',' << fmt6(max_abs) << ','
            << fmt6(max_rel) << ',' << (pass ? 1 : 0) << '\n';
    }
    write_file(out + "/gradcheck.csv", csv.str());
    std::cout << "gradcheck instances=" << instances << " failures=" << failures
              << " max_rel_err=" << fmt6(worst_rel) << '\n';
    return failures == 0 ? 0 : 1;
}

} // namespace epo
