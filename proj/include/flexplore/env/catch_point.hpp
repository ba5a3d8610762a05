#pragma once

#include <cmath>

#include "flexplore/env/env.hpp"

namespace flexplore {

// Planar pursuit with a catch budget. The agent moves in the [-1, 1]^2
// arena and must catch a fixed target point within 10 catch attempts.
// Hybrid actions: move(dx, dy) scaled to a bounded stride, and catch with
// no parameters. A catch succeeds when the target is inside the catch
// radius (+10, episode ends); a miss costs -1 and one chance. Moving costs
// a small amount so idling is never optimal.
//
// Constants: stride 0.25 per unit command, catch radius 0.18, move cost
// 0.05, 10 chances, 40-step cap.
class CatchPointEnv : public Env {
public:
    static constexpr double kStride = 0.25;
    static constexpr double kCatchRadius = 0.18;
    static constexpr double kMoveCost = 0.05;
    static constexpr double kMissPenalty = 1.0;
    static constexpr double kSuccessReward = 10.0;
    static constexpr int kChances = 10;
    static constexpr int kMaxSteps = 40;

    enum { SAX = 0, SAY, STX, STY, SChances, ST, kStateDim };
    enum { kMove = 0, kCatch = 1 };

    CatchPointEnv() {
        spec_.id = "catch_point";
        spec_.state_dim = kStateDim;
        spec_.K = 2;
        spec_.param_dims = {2, 0};
        spec_.param_bounds = {{{-1.0, 1.0}, {-1.0, 1.0}}, {}};
        spec_.max_episode_steps = kMaxSteps;
    }

    const EnvSpec& spec() const override { return spec_; }
    Interval reward_bounds() const override { return {-kMissPenalty, kSuccessReward}; }

    Vec reset(uint64_t seed) const override {
        Rng rng(seed);
        Vec s(kStateDim, 0.0);
        s[SAX] = rng.uniform(-0.5, 0.5);
        s[SAY] = rng.uniform(-0.5, 0.5);
        do {
            s[STX] = rng.uniform(-0.85, 0.85);
            s[STY] = rng.uniform(-0.85, 0.85);
        } while (std::hypot(s[STX] - s[SAX], s[STY] - s[SAY]) < 0.5);
        s[SChances] = kChances;
        return s;
    }

    StepResult step(const Vec& state, const HybridAction& action) const override {
        check_action(action);
        StepResult out;
        out.next_state = state;
        Vec& s = out.next_state;
        s[ST] = state[ST] + 1.0 / kMaxSteps;

        if (action.k == kMove) {
            Vec z = action.z;
            if (clip_params(action.k, z)) out.info["clipped"] = 1.0;
            s[SAX] = std::clamp(state[SAX] + kStride * z[0], -1.0, 1.0);
            s[SAY] = std::clamp(state[SAY] + kStride * z[1], -1.0, 1.0);
            out.reward = -kMoveCost;
        } else {
            double d = std::hypot(state[SAX] - state[STX], state[SAY] - state[STY]);
            if (d <= kCatchRadius) {
                out.reward = kSuccessReward;
                out.done = true;
                out.info["success"] = 1.0;
            } else {
                out.reward = -kMissPenalty;
                s[SChances] = state[SChances] - 1.0;
                if (s[SChances] <= 0.0) out.done = true;
            }
        }
        if (s[ST] >= 1.0 - 1e-12) out.done = true;
        return out;
    }

private:
    EnvSpec spec_;
};

}  // namespace flexplore
