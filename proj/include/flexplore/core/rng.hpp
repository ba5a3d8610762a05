#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace flexplore {

// Splittable counter-free PRNG (SplitMix64 core). All randomness in the
// library flows through explicit Rng values; there is no global state, so
// identical seeds give identical trajectories regardless of call order
// elsewhere. split() derives an independent child stream and advances the
// parent, which keeps sibling streams decoupled when a code path is gated
// off (ablations draw nothing from streams they do not own).
struct Rng {
    uint64_t state = 0x853c49e6748fea9bULL;

    Rng() = default;
    explicit Rng(uint64_t seed) : state(seed + 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    Rng split() { return Rng(next_u64()); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1), safe under log()
    double uniform_pos() {
        double u = uniform();
        return u > 0.0 ? u : 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; consumes two words per draw
    double normal() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    // standard Gumbel(0, 1)
    double gumbel() { return -std::log(-std::log(uniform_pos())); }

    // uniform integer in [0, n)
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }
};

}  // namespace flexplore
