#pragma once

#include <cmath>

#include "flexplore/env/env.hpp"

namespace flexplore {

// Side-scrolling platform course. The agent advances along x over three
// platforms separated by two gaps, with an enemy patrolling each of the
// first two platforms. Discrete actions: run (ground move, vulnerable to
// enemies, cannot cross gaps), hop and leap (airborne moves of increasing
// range, immune to enemies, die when landing inside a gap). Each action
// carries one continuous parameter, the forward displacement.
//
// Reward is normalized forward progress (dx / course length), so episode
// return lies in [0, 1] and finishing the course scores ~1. Death freezes
// the agent in an absorbing zero-reward state for a few steps before the
// episode ends, which puts the absorbing dynamics into the replay data.
//
// Geometry constants (one table; all x units in course lengths of 10):
//   platforms     [0.0, 3.0] [3.5, 6.5] [7.2, 10.0]
//   gaps          [3.0, 3.5] [6.5, 7.2]
//   enemy 1       patrols [1.0, 2.5], speed 0.10 / step
//   enemy 2       patrols [4.3, 6.0], speed 0.12 / step
//   collide       |x_agent - x_enemy| < 0.15 while running
//   run dx        [0, 0.35];  hop dx [0, 0.50];  leap dx [0, 0.90]
//   episode cap   100 steps;  death freeze 10 steps
class PlatformEnv : public Env {
public:
    static constexpr double kLength = 10.0;
    static constexpr double kPlat[3][2] = {{0.0, 3.0}, {3.5, 6.5}, {7.2, 10.0}};
    static constexpr double kGap[2][2] = {{3.0, 3.5}, {6.5, 7.2}};
    static constexpr double kEnemyLo[2] = {1.0, 4.3};
    static constexpr double kEnemyHi[2] = {2.5, 6.0};
    static constexpr double kEnemySpeed[2] = {0.10, 0.12};
    static constexpr double kCollideRadius = 0.15;
    static constexpr double kMaxDx[3] = {0.35, 0.50, 0.90};  // run, hop, leap
    static constexpr int kMaxSteps = 100;
    static constexpr int kFreezeSteps = 10;

    // state layout
    enum {
        SX = 0,       // agent x / 10
        SPlatEnd,     // (platform end - x) / 10
        SGapRel,      // (next gap start - x) / 10, goal distance when past all gaps
        SGapWidth,    // width of next gap / 10
        SE1, SE1Dir,  // enemy 1 x / 10 and direction
        SE2, SE2Dir,
        ST,           // step count / max steps
        SDead,        // 0 alive, k / freeze steps while dead
        kStateDim
    };

    PlatformEnv() {
        spec_.id = "platform";
        spec_.state_dim = kStateDim;
        spec_.K = 3;  // run, hop, leap
        spec_.param_dims = {1, 1, 1};
        spec_.param_bounds = {{{0.0, kMaxDx[0]}}, {{0.0, kMaxDx[1]}}, {{0.0, kMaxDx[2]}}};
        spec_.max_episode_steps = kMaxSteps;
    }

    const EnvSpec& spec() const override { return spec_; }
    Interval reward_bounds() const override { return {0.0, 1.0}; }

    Vec reset(uint64_t seed) const override {
        Rng rng(seed);
        Vec s(kStateDim, 0.0);
        s[SX] = 0.0;
        for (int e = 0; e < 2; ++e) {
            double pos = rng.uniform(kEnemyLo[e], kEnemyHi[e]);
            double dir = rng.uniform() < 0.5 ? -1.0 : 1.0;
            s[e == 0 ? SE1 : SE2] = pos / kLength;
            s[e == 0 ? SE1Dir : SE2Dir] = dir;
        }
        fill_geometry(s);
        return s;
    }

    StepResult step(const Vec& state, const HybridAction& action) const override {
        check_action(action);
        StepResult out;
        out.next_state = state;
        Vec& s = out.next_state;

        bool dead = state[SDead] > 0.0;
        if (dead) {
            // absorbing freeze: nothing moves, reward 0
            s[ST] = state[ST] + 1.0 / kMaxSteps;
            s[SDead] = state[SDead] + 1.0 / kFreezeSteps;
            out.done = s[SDead] >= 1.0 - 1e-12 || s[ST] >= 1.0 - 1e-12;
            return out;
        }

        Vec z = action.z;
        if (clip_params(action.k, z)) out.info["clipped"] = 1.0;
        double dx = z[0];
        double x = state[SX] * kLength;
        double x_new = x + dx;

        // enemies advance and bounce
        double epos[2] = {state[SE1] * kLength, state[SE2] * kLength};
        double edir[2] = {state[SE1Dir], state[SE2Dir]};
        for (int e = 0; e < 2; ++e) {
            epos[e] += edir[e] * kEnemySpeed[e];
            if (epos[e] > kEnemyHi[e]) { epos[e] = kEnemyHi[e] - (epos[e] - kEnemyHi[e]); edir[e] = -1.0; }
            if (epos[e] < kEnemyLo[e]) { epos[e] = kEnemyLo[e] + (kEnemyLo[e] - epos[e]); edir[e] = 1.0; }
        }

        bool died = false;
        if (action.k == 0) {
            // running cannot leave the current platform, except into the goal
            double plat_end = platform_end(x);
            if (x_new > plat_end && x_new < kLength) {
                x_new = plat_end;
                died = true;
            }
            if (!died && x_new < kLength) {
                for (int e = 0; e < 2; ++e)
                    if (std::abs(x_new - epos[e]) < kCollideRadius) died = true;
            }
        } else {
            // airborne: dies only when landing strictly inside a gap
            for (const auto& g : kGap)
                if (x_new > g[0] && x_new < g[1]) died = true;
        }

        bool success = !died && x_new >= kLength;
        if (success) x_new = kLength;

        out.reward = died ? 0.0 : (x_new - x) / kLength;
        s[SX] = x_new / kLength;
        s[SE1] = epos[0] / kLength;
        s[SE1Dir] = edir[0];
        s[SE2] = epos[1] / kLength;
        s[SE2Dir] = edir[1];
        s[ST] = state[ST] + 1.0 / kMaxSteps;
        s[SDead] = died ? 1.0 / kFreezeSteps : 0.0;
        fill_geometry(s);
        if (died) out.info["death"] = 1.0;
        if (success) {
            out.info["success"] = 1.0;
            out.done = true;
        }
        if (s[ST] >= 1.0 - 1e-12) out.done = true;
        return out;
    }

private:
    EnvSpec spec_;

    static double platform_end(double x) {
        for (const auto& p : kPlat)
            if (x <= p[1] + 1e-12) return p[1];
        return kLength;
    }

    static void fill_geometry(Vec& s) {
        double x = s[SX] * kLength;
        s[SPlatEnd] = (platform_end(x) - x) / kLength;
        double gap_rel = (kLength - x) / kLength;
        double gap_w = 0.0;
        for (const auto& g : kGap) {
            if (x < g[0]) {
                gap_rel = (g[0] - x) / kLength;
                gap_w = (g[1] - g[0]) / kLength;
                break;
            }
        }
        s[SGapRel] = gap_rel;
        s[SGapWidth] = gap_w;
    }
};

}  // namespace flexplore
