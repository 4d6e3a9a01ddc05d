#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace cobra {

// SplitMix64 generator. All randomness in the project flows through this
// class so that a (seed, config) pair pins every run. The state is a single
// u64 plus the cached Box-Muller spare, both of which are serialized into
// checkpoints.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        // Modulo bias is negligible for the small n used here.
        return next_u64() % n;
    }

    // Standard normal via the polar (Marsaglia) method.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream; used to give each step / subject its own
    // generator without coupling draw counts.
    Rng fork(uint64_t tag) {
        Rng r(next_u64() ^ (tag * 0xD1342543DE82EF95ull));
        return r;
    }

    uint64_t state() const { return state_; }
    bool has_spare() const { return has_spare_; }
    double spare() const { return spare_; }
    void restore(uint64_t state, bool has_spare, double spare) {
        state_ = state;
        has_spare_ = has_spare;
        spare_ = spare;
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cobra
