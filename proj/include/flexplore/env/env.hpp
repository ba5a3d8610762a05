#pragma once

#include <map>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexplore/core/mat.hpp"
#include "flexplore/core/rng.hpp"

namespace flexplore {

// Discrete action index plus the continuous parameters attached to it.
struct HybridAction {
    int k = 0;
    Vec z;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct EnvSpec {
    std::string id;
    int state_dim = 0;
    int K = 0;
    std::vector<int> param_dims;                  // one entry per k
    std::vector<std::vector<Interval>> param_bounds;  // per (k, coordinate)
    int max_episode_steps = 0;

    int max_param_dim() const {
        int m = 0;
        for (int d : param_dims) m = std::max(m, d);
        return m;
    }
};

struct StepResult {
    Vec next_state;
    double reward = 0.0;
    bool done = false;
    std::map<std::string, double> info;
};

// Environments are immutable-state steppers: step() is a pure function of
// (state, action), so independent rollouts can run concurrently. reset(seed)
// derives every per-episode random choice from the seed.
class Env {
public:
    virtual ~Env() = default;
    virtual const EnvSpec& spec() const = 0;
    virtual Vec reset(uint64_t seed) const = 0;
    virtual StepResult step(const Vec& state, const HybridAction& action) const = 0;
    virtual Interval reward_bounds() const = 0;

    // Clips z into the per-(k, coordinate) box. Returns true if anything moved.
    bool clip_params(int k, Vec& z) const {
        const auto& bounds = spec().param_bounds[k];
        bool clipped = false;
        for (size_t i = 0; i < z.size(); ++i) {
            if (z[i] < bounds[i].lo) { z[i] = bounds[i].lo; clipped = true; }
            if (z[i] > bounds[i].hi) { z[i] = bounds[i].hi; clipped = true; }
        }
        return clipped;
    }

protected:
    void check_action(const HybridAction& a) const {
        const EnvSpec& s = spec();
        if (a.k < 0 || a.k >= s.K)
            throw std::invalid_argument(s.id + ": discrete action " + std::to_string(a.k) +
                                        " out of range [0, " + std::to_string(s.K) + ")");
        if (static_cast<int>(a.z.size()) != s.param_dims[a.k])
            throw std::invalid_argument(s.id + ": action " + std::to_string(a.k) + " expects " +
                                        std::to_string(s.param_dims[a.k]) + " parameters, got " +
                                        std::to_string(a.z.size()));
    }
};

// Trajectory dump: step, state[...], k, z[...], reward, done
struct TrajectoryRow {
    int step = 0;
    Vec state;
    HybridAction action;
    double reward = 0.0;
    bool done = false;
};

inline void dump_trajectory_csv(std::ostream& os, const EnvSpec& spec,
                                const std::vector<TrajectoryRow>& rows) {
    os << "step";
    for (int i = 0; i < spec.state_dim; ++i) os << ",state" << i;
    os << ",k";
    for (int i = 0; i < spec.max_param_dim(); ++i) os << ",z" << i;
    os << ",reward,done\n";
    char buf[64];
    auto put = [&](double v) {
        snprintf(buf, sizeof(buf), "%.17g", v);
        os << ',' << buf;
    };
    for (const auto& r : rows) {
        os << r.step;
        for (double v : r.state) put(v);
        os << ',' << r.action.k;
        for (int i = 0; i < spec.max_param_dim(); ++i)
            put(i < static_cast<int>(r.action.z.size()) ? r.action.z[i] : 0.0);
        put(r.reward);
        os << ',' << (r.done ? 1 : 0) << '\n';
    }
}

}  // namespace flexplore
