#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace epo {

// Deterministic named substreams.  Every stochastic component draws from its
// own stream derived from (root seed, owner id, purpose), so adding or
// removing one consumer never perturbs the draws seen by another.
//
// The generator is splitmix64 over a 64-bit counter; distribution sampling is
// implemented here rather than with <random> distributions so that output is
// identical across standard library implementations.
class Rng {
public:
    Rng() : state_(0x9e3779b97f4a7c15ull) {}
    explicit Rng(uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {}

    static uint64_t mix(uint64_t a, uint64_t b) {
        // One splitmix64 round over the combined words.
        uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static uint64_t hash_str(const std::string& s) {
        uint64_t h = 0xcbf29ce484222325ull; // FNV-1a 64
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    // Substream keyed by owner (node id or similar) and purpose label.
    static Rng substream(uint64_t root, const std::string& owner, const std::string& purpose) {
        return Rng(mix(mix(root, hash_str(owner)), hash_str(purpose)));
    }
    static Rng substream(uint64_t root, uint64_t owner, const std::string& purpose) {
        return Rng(mix(mix(root, owner), hash_str(purpose)));
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1): 53 mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) { return n ? next_u64() % n : 0; }

    double exponential(double rate) {
        // Inverse CDF; uniform() < 1 keeps the log argument positive.
        return -std::log(1.0 - uniform()) / rate;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Index draw proportional to non-negative weights; all-zero rows fall
    // back to the first entry.
    size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) return 0;
        double u = uniform() * total;
        double acc = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.size() - 1;
    }

private:
    uint64_t state_;
};

} // namespace epo
