#pragma once

#include <cmath>
#include <numbers>

#include "flexplore/env/env.hpp"

namespace flexplore {

// n equally spaced actuators drive a point agent toward a target region.
// The discrete action is the bitmask of active actuators (K = 2^n); the
// continuous parameters give one displacement magnitude per actuator in
// [-1, 1], ignored for inactive ones. The step displacement is the vector
// sum of active actuator contributions, actuator i pointing at angle
// 2*pi*i/n with scale 0.1 per unit command.
//
// Reward is the negative distance to the target after the move, +10 once
// inside the target radius (episode ends). Arena [-1, 1]^2, target radius
// 0.15, 50-step cap.
class HardMoveEnv : public Env {
public:
    static constexpr double kScale = 0.1;
    static constexpr double kTargetRadius = 0.15;
    static constexpr double kSuccessReward = 10.0;
    static constexpr int kMaxSteps = 50;

    enum { SAX = 0, SAY, STX, STY, SDist, ST, kStateDim };

    explicit HardMoveEnv(int n) : n_(n) {
        if (n < 1 || n > 10) throw std::invalid_argument("hard_move: n must be in [1, 10]");
        spec_.id = "hard_move:" + std::to_string(n);
        spec_.state_dim = kStateDim;
        spec_.K = 1 << n;
        spec_.param_dims.assign(spec_.K, n);
        spec_.param_bounds.assign(spec_.K, std::vector<Interval>(n, {-1.0, 1.0}));
        spec_.max_episode_steps = kMaxSteps;
    }

    int actuators() const { return n_; }

    const EnvSpec& spec() const override { return spec_; }
    Interval reward_bounds() const override {
        // worst case: full diagonal distance of the arena
        return {-2.0 * std::numbers::sqrt2, kSuccessReward};
    }

    // displacement of action (k, z): sum over active actuators
    Vec displacement(int k, const Vec& z) const {
        double dx = 0.0, dy = 0.0;
        for (int i = 0; i < n_; ++i) {
            if (!(k & (1 << i))) continue;
            double ang = 2.0 * std::numbers::pi * i / n_;
            dx += z[i] * kScale * std::cos(ang);
            dy += z[i] * kScale * std::sin(ang);
        }
        return {dx, dy};
    }

    Vec reset(uint64_t seed) const override {
        Rng rng(seed);
        Vec s(kStateDim, 0.0);
        s[SAX] = rng.uniform(-0.9, 0.9);
        s[SAY] = rng.uniform(-0.9, 0.9);
        do {
            s[STX] = rng.uniform(-0.9, 0.9);
            s[STY] = rng.uniform(-0.9, 0.9);
        } while (std::hypot(s[STX] - s[SAX], s[STY] - s[SAY]) < 0.8);
        s[SDist] = std::hypot(s[STX] - s[SAX], s[STY] - s[SAY]);
        return s;
    }

    StepResult step(const Vec& state, const HybridAction& action) const override {
        check_action(action);
        StepResult out;
        out.next_state = state;
        Vec& s = out.next_state;

        Vec z = action.z;
        if (clip_params(action.k, z)) out.info["clipped"] = 1.0;
        Vec d = displacement(action.k, z);
        s[SAX] = std::clamp(state[SAX] + d[0], -1.0, 1.0);
        s[SAY] = std::clamp(state[SAY] + d[1], -1.0, 1.0);
        s[SDist] = std::hypot(s[STX] - s[SAX], s[STY] - s[SAY]);
        s[ST] = state[ST] + 1.0 / kMaxSteps;

        out.reward = -s[SDist];
        if (s[SDist] <= kTargetRadius) {
            out.reward += kSuccessReward;
            out.done = true;
            out.info["success"] = 1.0;
        }
        if (s[ST] >= 1.0 - 1e-12) out.done = true;
        return out;
    }

private:
    int n_;
    EnvSpec spec_;
};

}  // namespace flexplore
