#include "epo/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "epo/analytics.hpp"
#include "epo/errors.hpp"
#include "epo/rng.hpp"

namespace epo {

namespace {

Strategy weighted_strategy(const Scenario& s, bool by_capacity) {
    Strategy p;
    p.rows.resize(s.nodes.size());
    const int H = s.depth();
    for (size_t i = 0; i < s.nodes.size(); ++i) {
        if (s.nodes[i].layer >= H) continue;
        const auto& out = s.successors[i];
        if (out.empty()) continue;
        std::vector<double> w(out.size());
        double total = 0.0;
        for (size_t k = 0; k < out.size(); ++k) {
            const Edge& e = s.edges[static_cast<size_t>(out[k])];
            w[k] = by_capacity ? s.nodes[static_cast<size_t>(e.to)].mu : e.rate;
            total += w[k];
        }
        if (total <= 0.0) {
            w.assign(out.size(), 1.0);
            total = static_cast<double>(out.size());
        }
        double partial = 0.0;
        for (size_t k = 0; k + 1 < out.size(); ++k) {
            w[k] /= total;
            partial += w[k];
        }
        w[out.size() - 1] = 1.0 - partial;
        p.rows[i] = std::move(w);
    }
    return p;
}

// Euclidean projection onto the probability simplex.
std::vector<double> project_simplex(std::vector<double> v) {
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double acc = 0.0, theta = 0.0;
    int rho = 0;
    for (size_t k = 0; k < u.size(); ++k) {
        acc += u[k];
        double t = (acc - 1.0) / static_cast<double>(k + 1);
        if (u[k] - t > 0.0) {
            rho = static_cast<int>(k + 1);
            theta = t;
        }
    }
    (void)rho;
    for (double& x : v) x = std::max(0.0, x - theta);
    return v;
}

} // namespace

Strategy cf_strategy(const Scenario& s) { return weighted_strategy(s, true); }

Strategy bf_strategy(const Scenario& s) { return weighted_strategy(s, false); }

NgtoResult ngto_solve(const Scenario& s, const std::vector<double>& survival,
                      const BaselineConfig& cfg) {
    const int H = s.depth();
    const double eps = s.params.epsilon;
    NgtoResult res;
    res.strategy = uniform_strategy(s);
    Strategy& p = res.strategy;

    for (int cycle = 0; cycle < cfg.ngto_max_cycles; ++cycle) {
        double max_change = 0.0;
        for (size_t i = 0; i < s.nodes.size(); ++i) {
            if (s.nodes[i].layer >= H) continue;
            const auto& out = s.successors[i];
            if (out.size() <= 1) continue;

            FlowState flow = propagate_flows(s, p, survival);
            int h = s.nodes[i].layer;
            double alpha = s.stage(h + 1).alpha;
            double beta = s.stage(h + 1).beta;
            double own = flow.phi[i] * survival[static_cast<size_t>(h)] * alpha;

            std::vector<double> base(out.size()), rate(out.size()), mu(out.size());
            auto& row = p.rows[i];
            for (size_t k = 0; k < out.size(); ++k) {
                const Edge& e = s.edges[static_cast<size_t>(out[k])];
                mu[k] = s.nodes[static_cast<size_t>(e.to)].mu;
                rate[k] = e.rate;
                base[k] = flow.lambda[static_cast<size_t>(e.to)] - row[k] * own;
            }

            std::vector<double> q = row;
            for (int step = 0; step < cfg.ngto_inner_steps; ++step) {
                std::vector<double> grad(out.size());
                for (size_t k = 0; k < out.size(); ++k) {
                    double lam = base[k] + q[k] * own;
                    double capped = std::min(lam, mu[k] - eps);
                    double gap = mu[k] - capped;
                    grad[k] = beta / rate[k] + alpha / gap;
                    if (lam < mu[k] - eps) grad[k] += q[k] * own * alpha / (gap * gap);
                }
                for (size_t k = 0; k < out.size(); ++k) q[k] -= cfg.ngto_inner_step * grad[k];
                q = project_simplex(std::move(q));
            }
            for (size_t k = 0; k < out.size(); ++k)
                max_change = std::max(max_change, std::abs(q[k] - row[k]));
            row = q;
        }
        res.cycles = cycle + 1;
        if (max_change < cfg.ngto_tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

namespace {

struct PathContext {
    const Scenario* s;
    const std::vector<double>* survival;
    const std::vector<double>* load;   // committed GFLOP/s per node
    double phi;                        // source task rate
};

double path_fitness(const PathContext& ctx, int source, const std::vector<int>& path) {
    const Scenario& s = *ctx.s;
    const int H = s.depth();
    double eps = s.params.epsilon;
    double t = 0.0;
    double rate_in = ctx.phi; // task rate surviving to the current hop
    int prev = source;
    for (int h = 1; h <= H; ++h) {
        int node = path[static_cast<size_t>(h - 1)];
        double link_rate = -1.0;
        for (int e : s.successors[static_cast<size_t>(prev)])
            if (s.edges[static_cast<size_t>(e)].to == node) link_rate = s.edges[static_cast<size_t>(e)].rate;
        if (link_rate <= 0.0) throw DomainError("disconnected path in fitness evaluation");
        double alpha = s.stage(h).alpha;
        t += s.stage(h).beta / link_rate;
        double lam = (*ctx.load)[static_cast<size_t>(node)] + rate_in * alpha;
        double mu = s.nodes[static_cast<size_t>(node)].mu;
        double capped = std::min(lam, mu - eps);
        t += alpha / (mu - capped);
        rate_in *= (*ctx.survival)[static_cast<size_t>(h)];
        prev = node;
    }
    return t;
}

std::vector<int> random_path(const Scenario& s, int source, Rng& rng) {
    std::vector<int> path;
    int prev = source;
    for (int h = 1; h <= s.depth(); ++h) {
        const auto& out = s.successors[static_cast<size_t>(prev)];
        if (out.empty()) throw DomainError("node without successors on path");
        int e = out[rng.uniform_int(out.size())];
        prev = s.edges[static_cast<size_t>(e)].to;
        path.push_back(prev);
    }
    return path;
}

// Re-route any hop that is not reachable from its predecessor.
void repair_path(const Scenario& s, int source, std::vector<int>& path, Rng& rng) {
    int prev = source;
    for (size_t h = 0; h < path.size(); ++h) {
        const auto& out = s.successors[static_cast<size_t>(prev)];
        bool ok = false;
        for (int e : out)
            if (s.edges[static_cast<size_t>(e)].to == path[h]) ok = true;
        if (!ok) {
            int e = out[rng.uniform_int(out.size())];
            path[h] = s.edges[static_cast<size_t>(e)].to;
        }
        prev = path[h];
    }
}

} // namespace

GaResult ga_solve(const Scenario& s, const std::vector<double>& survival, uint64_t seed,
                  const BaselineConfig& cfg) {
    const int H = s.depth();
    GaResult res;
    std::vector<double> committed(s.nodes.size(), 0.0);
    std::vector<double> snapshot = committed;

    for (int src : s.layer_nodes[0]) {
        Rng rng = Rng::substream(seed, s.nodes[static_cast<size_t>(src)].id, "ga");
        PathContext ctx{&s, &survival, cfg.ga_stale_info ? &snapshot : &committed,
                        s.nodes[static_cast<size_t>(src)].arrival_rate};

        std::vector<std::vector<int>> pop;
        std::vector<double> fit;
        for (int k = 0; k < cfg.ga_population; ++k) {
            pop.push_back(random_path(s, src, rng));
            fit.push_back(path_fitness(ctx, src, pop.back()));
        }
        auto best_of = [&]() {
            size_t b = 0;
            for (size_t k = 1; k < pop.size(); ++k)
                if (fit[k] < fit[b]) b = k;
            return b;
        };
        std::vector<double> history;
        for (int gen = 0; gen < cfg.ga_generations; ++gen) {
            std::vector<std::vector<int>> next;
            std::vector<double> next_fit;
            size_t elite = best_of();
            next.push_back(pop[elite]);
            next_fit.push_back(fit[elite]);
            auto tournament = [&]() {
                size_t winner = rng.uniform_int(pop.size());
                for (int t = 1; t < cfg.ga_tournament; ++t) {
                    size_t c = rng.uniform_int(pop.size());
                    if (fit[c] < fit[winner]) winner = c;
                }
                return winner;
            };
            while (static_cast<int>(next.size()) < cfg.ga_population) {
                const auto& pa = pop[tournament()];
                const auto& pb = pop[tournament()];
                size_t cut = 1 + rng.uniform_int(static_cast<uint64_t>(H));
                std::vector<int> child;
                for (size_t g = 0; g < static_cast<size_t>(H); ++g)
                    child.push_back(g < cut ? pa[g] : pb[g]);
                for (size_t g = 0; g < child.size(); ++g) {
                    if (rng.uniform() < cfg.ga_mutation) {
                        int prev = g == 0 ? src : child[g - 1];
                        const auto& out = s.successors[static_cast<size_t>(prev)];
                        child[g] = s.edges[static_cast<size_t>(out[rng.uniform_int(out.size())])].to;
                    }
                }
                repair_path(s, src, child, rng);
                next.push_back(child);
                next_fit.push_back(path_fitness(ctx, src, next.back()));
            }
            pop = std::move(next);
            fit = std::move(next_fit);
            history.push_back(fit[best_of()]);
        }
        size_t b = best_of();
        res.paths.push_back(pop[b]);
        res.best_fitness_history.push_back(history);

        // Commit the winning path's load.
        double rate_in = ctx.phi;
        for (int h = 1; h <= H; ++h) {
            int node = pop[b][static_cast<size_t>(h - 1)];
            committed[static_cast<size_t>(node)] += rate_in * s.stage(h).alpha;
            rate_in *= survival[static_cast<size_t>(h)];
        }
    }

    // Source rows are one-hot toward the chosen first hop; server rows follow
    // the task flow the committed paths push through each link.
    std::vector<double> edge_mass(s.edges.size(), 0.0);
    {
        size_t src_pos = 0;
        for (int src : s.layer_nodes[0]) {
            const auto& path = res.paths[src_pos++];
            double rate_in = s.nodes[static_cast<size_t>(src)].arrival_rate;
            int prev = src;
            for (int h = 1; h <= H; ++h) {
                int node = path[static_cast<size_t>(h - 1)];
                for (int e : s.successors[static_cast<size_t>(prev)])
                    if (s.edges[static_cast<size_t>(e)].to == node)
                        edge_mass[static_cast<size_t>(e)] += rate_in;
                rate_in *= survival[static_cast<size_t>(h)];
                prev = node;
            }
        }
    }
    res.strategy.rows.resize(s.nodes.size());
    {
        size_t src_pos = 0;
        for (int src : s.layer_nodes[0]) {
            const auto& out = s.successors[static_cast<size_t>(src)];
            std::vector<double> row(out.size(), 0.0);
            for (size_t k = 0; k < out.size(); ++k)
                if (s.edges[static_cast<size_t>(out[k])].to == res.paths[src_pos][0]) row[k] = 1.0;
            res.strategy.rows[static_cast<size_t>(src)] = std::move(row);
            ++src_pos;
        }
    }
    for (size_t i = 0; i < s.nodes.size(); ++i) {
        if (s.nodes[i].layer == 0 || s.nodes[i].layer >= H) continue;
        const auto& out = s.successors[i];
        if (out.empty()) continue;
        std::vector<double> row(out.size(), 0.0);
        double total = 0.0;
        for (size_t k = 0; k < out.size(); ++k) {
            row[k] = edge_mass[static_cast<size_t>(out[k])];
            total += row[k];
        }
        if (total <= 0.0) {
            row.assign(out.size(), 1.0 / static_cast<double>(out.size()));
            double partial = 0.0;
            for (size_t k = 0; k + 1 < out.size(); ++k) partial += row[k];
            row[out.size() - 1] = 1.0 - partial;
        } else {
            double partial = 0.0;
            for (size_t k = 0; k + 1 < out.size(); ++k) {
                row[k] /= total;
                partial += row[k];
            }
            row[out.size() - 1] = 1.0 - partial;
        }
        res.strategy.rows[i] = std::move(row);
    }
    return res;
}

} // namespace epo
