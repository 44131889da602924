#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace gtn {

// Deterministic RNG with explicit distribution code, so that sequences do not
// depend on the standard library's unspecified distribution algorithms.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(splitmix(seed)) {}

    // Derives an independent stream, e.g. one per worker or per episode.
    Rng fork(uint64_t stream) const { return Rng(splitmix(seed_ ^ splitmix(stream + 0x51ed2701))); }

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    int uniform_int(int n) { return static_cast<int>(engine_() % static_cast<uint64_t>(n)); }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.141592653589793238462643 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Categorical sample from a probability vector (assumed to sum to ~1).
    int categorical(const std::vector<double>& probs) {
        double u = uniform();
        double acc = 0.0;
        for (size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    }

private:
    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace gtn
