#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "flexplore/env/make_env.hpp"
#include "flexplore/plan/planner.hpp"
#include "flexplore/train/config.hpp"
#include "flexplore/train/replay.hpp"

namespace flexplore {

struct TrainerAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelUpdateResult {
    double loss_org_dyn = 0.0;
    double loss_ex = 0.0;
    double critic_penalty = 0.0;
    double loss_org_rew = 0.0;
    double loss_smt = 0.0;
    double total = 0.0;
    double consistency_error = 0.0;
    bool smoothing_active = false;
    bool critic_reset = false;
    bool skipped = false;
};

// Mean one-step L2 gap between true next states and the dynamics mean.
inline double batch_consistency_error(const WorldModel& m, const std::vector<Segment>& batch) {
    double sum = 0.0;
    size_t n = 0;
    for (const Segment& seg : batch) {
        for (const SegRecord& rec : seg.records) {
            Prediction p = predict(m, rec.s, rec.a.k, rec.a.z);
            double d2 = 0.0;
            for (size_t j = 0; j < rec.s_next.size(); ++j) {
                double d = rec.s_next[j] - p.mean[j];
                d2 += d * d;
            }
            sum += std::sqrt(d2);
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

// One Algorithm-1 learning step on a sampled batch: critic ascent (when the
// exploration loss is active), then a joint Adam update of phi and psi on
// L_total_dyn + alpha * L_total_rew with the timestep gate on smoothing.
inline ModelUpdateResult model_update(WorldModel& m, const std::vector<Segment>& batch,
                                      const TrainConfig& cfg, long timestep, Rng& learn_rng) {
    ModelUpdateResult res;
    double lambda = cfg.effective_lambda();
    long T_eff = cfg.effective_T();

    if (lambda > 0.0 && cfg.critic_steps > 0) {
        CriticStepInfo ci =
            critic_adversarial_step(m, batch, cfg.critic_steps, cfg.n_model_samples, learn_rng);
        res.critic_penalty = ci.penalty;
        res.critic_reset = ci.reset;
    }

    Rng ex_rng = learn_rng.split();
    Rng smt_rng = learn_rng.split();

    Tape t;
    Tape::Id dyn_org = build_loss_org_dyn(t, m, batch);
    res.loss_org_dyn = t.scalar(dyn_org);
    Tape::Id dyn_total = dyn_org;
    if (lambda > 0.0) {
        Tape::Id lex = build_loss_ex(t, m, batch, cfg.n_model_samples, ex_rng, true);
        res.loss_ex = t.scalar(lex);
        dyn_total = t.add(dyn_total, t.scale(lex, lambda));
    }
    RewLossParts rew = build_loss_total_rew(t, m, batch, cfg.mu, cfg.eps, timestep, T_eff, smt_rng);
    res.loss_org_rew = rew.org;
    res.loss_smt = rew.smt;
    res.smoothing_active = rew.smoothing_active;
    Tape::Id total = t.add(dyn_total, t.scale(rew.total, cfg.alpha));
    res.total = t.scalar(total);

    if (!std::isfinite(res.total)) {
        res.skipped = true;
        return res;
    }
    m.dyn.zero_grads();
    m.rew.zero_grads();
    t.backward(total);
    try {
        adam_step(m.dyn, m.cfg.adam);
        adam_step(m.rew, m.cfg.adam);
    } catch (const std::runtime_error&) {
        res.skipped = true;
        return res;
    }
    res.consistency_error = batch_consistency_error(m, batch);
    return res;
}

inline HybridAction random_action(const EnvSpec& spec, Rng& rng) {
    HybridAction a;
    a.k = rng.uniform_int(spec.K);
    a.z.resize(spec.param_dims[a.k]);
    for (int i = 0; i < spec.param_dims[a.k]; ++i) {
        const Interval& b = spec.param_bounds[a.k][i];
        a.z[i] = rng.uniform(b.lo, b.hi);
    }
    return a;
}

struct EvalStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> returns;
};

// Greedy evaluation: planner at the exploration-temperature floor,
// refinement on scratch head copies, no persistent updates anywhere.
inline EvalStats evaluate(const Env& env, const WorldModel& m, const PlannerState& planner,
                          int episodes, double temp_floor, uint64_t seed) {
    EvalStats stats;
    Rng rng(seed);
    PlannerState greedy = planner;
    greedy.cfg.temperature = temp_floor;
    for (int ep = 0; ep < episodes; ++ep) {
        Vec s = env.reset(rng.next_u64());
        double ret = 0.0;
        for (int t = 0; t < env.spec().max_episode_steps; ++t) {
            HybridAction a = plan_greedy(m, greedy, s, rng);
            StepResult sr = env.step(s, a);
            ret += sr.reward;
            s = sr.next_state;
            if (sr.done) break;
        }
        stats.returns.push_back(ret);
    }
    if (!stats.returns.empty()) {
        double sum = 0.0;
        for (double r : stats.returns) sum += r;
        stats.mean = sum / static_cast<double>(stats.returns.size());
        double var = 0.0;
        for (double r : stats.returns) var += (r - stats.mean) * (r - stats.mean);
        stats.stddev = std::sqrt(var / static_cast<double>(stats.returns.size()));
    }
    return stats;
}

struct TrainResult {
    std::string metrics_path;
    std::string checkpoint_path;
    long env_steps = 0;
    std::vector<double> episode_returns;
    double mean_consistency_error = 0.0;  // mean over all updates of the run
    EvalStats eval;
    int skipped_updates = 0;
    int critic_resets = 0;
    double injected_fraction = 0.0;  // perturbed share of the final buffer
    WorldModel model;                // final parameters, for programmatic use
    PlannerState planner;
};

inline const char* kMetricsHeader =
    "env_step,episode_return,dyn_consistency_error,loss_org_dyn,loss_ex,critic_penalty,"
    "loss_org_rew,loss_smt,smoothing_active";

// Algorithm-1 outer loop: act through the planner (uniform-random during
// warmup), store transitions, learn every env step, stream metrics, save a
// final checkpoint, then run the greedy evaluation.
inline TrainResult train(const TrainConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    auto env = make_env(cfg.env_id);
    const EnvSpec& spec = env->spec();

    Rng root(cfg.seed);
    Rng init_rng = root.split();
    Rng env_rng = root.split();
    Rng action_rng = root.split();
    Rng learn_rng = root.split();
    Rng inject_rng = root.split();
    Rng eval_rng = root.split();

    WorldModelConfig mc;
    mc.state_dim = spec.state_dim;
    mc.K = spec.K;
    mc.z_dim = spec.max_param_dim();
    mc.hidden = cfg.hidden;
    WorldModel model(mc, init_rng);

    PlannerConfig pc;
    pc.N = cfg.planner_N;
    pc.n_elite = cfg.n_elite;
    pc.iters = cfg.plan_iters;
    pc.H = cfg.H;
    pc.gamma = cfg.gamma;
    pc.eta = cfg.effective_eta();
    pc.temperature = cfg.temperature;
    pc.hidden = cfg.hidden;
    PlannerState planner(pc, spec, init_rng);

    ReplayBuffer buffer(cfg.capacity);

    TrainResult result;
    result.metrics_path = out_dir + "/metrics.csv";
    result.checkpoint_path = out_dir + "/checkpoint.ckpt";

    std::ofstream metrics(result.metrics_path);
    if (!metrics) throw std::runtime_error("cannot open metrics file " + result.metrics_path);
    metrics << kMetricsHeader << "\n";

    char buf[64];
    auto fmt = [&](double v) {
        snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };

    struct Window {
        double dyn = 0, ex = 0, pen = 0, rew = 0, smt = 0, cons = 0;
        int updates = 0;
        void add(const ModelUpdateResult& r) {
            dyn += r.loss_org_dyn;
            ex += r.loss_ex;
            pen += r.critic_penalty;
            rew += r.loss_org_rew;
            smt += r.loss_smt;
            cons += r.consistency_error;
            ++updates;
        }
    } window;

    double last_episode_return = 0.0;
    double episode_return = 0.0;
    double consistency_sum = 0.0;
    long consistency_count = 0;
    int consecutive_skips = 0;

    std::ofstream trace_file;
    if (cfg.plan_trace) {
        trace_file.open(out_dir + "/plan_trace.jsonl");
        if (!trace_file) throw std::runtime_error("cannot open plan trace file");
    }

    Vec state = env->reset(env_rng.next_u64());

    for (long step = 1; step <= cfg.total_env_steps; ++step) {
        // act
        planner.cfg.temperature =
            std::max(cfg.temp_floor, planner.cfg.temperature * cfg.temp_anneal);
        HybridAction a;
        if (step <= cfg.warmup_steps) {
            a = random_action(spec, action_rng);
        } else if (cfg.plan_trace) {
            PlanTrace trace;
            a = plan(model, planner, state, action_rng, &trace);
            for (const PlanRound& pr : trace) {
                trace_file << "{\"env_step\": " << step << ", \"round\": " << pr.round
                           << ", \"best_total\": " << fmt(pr.best_total)
                           << ", \"mean_total\": " << fmt(pr.mean_total) << ", \"elite_k_hist\": [";
                for (size_t i = 0; i < pr.elite_k_hist.size(); ++i)
                    trace_file << (i ? "," : "") << pr.elite_k_hist[i];
                trace_file << "]}\n";
            }
        } else {
            a = plan(model, planner, state, action_rng);
        }
        StepResult sr = env->step(state, a);
        buffer.push({state, a, sr.reward, sr.next_state, sr.done, false});
        episode_return += sr.reward;
        if (sr.done) {
            result.episode_returns.push_back(episode_return);
            last_episode_return = episode_return;
            episode_return = 0.0;
            state = env->reset(env_rng.next_u64());
        } else {
            state = sr.next_state;
        }

        // learn
        for (int u = 0; u < cfg.model_updates_per_env_step; ++u) {
            std::vector<Segment> batch =
                sample_segments(buffer, cfg.H, cfg.batch_size, cfg.gamma, learn_rng);
            if (batch.empty()) break;  // warmup: not enough data yet
            ModelUpdateResult r = model_update(model, batch, cfg, step, learn_rng);
            if (r.critic_reset) ++result.critic_resets;
            if (r.skipped) {
                ++result.skipped_updates;
                ++consecutive_skips;
                std::cerr << "[flexplore] warning: non-finite loss at env step " << step
                          << ", update skipped\n";
                if (consecutive_skips >= 10) {
                    std::ofstream dump(out_dir + "/abort_dump.json");
                    dump << "{\"env_step\": " << step << ", \"total\": " << r.total
                         << ", \"loss_org_dyn\": " << r.loss_org_dyn
                         << ", \"loss_ex\": " << r.loss_ex << "}\n";
                    throw TrainerAbort("10 consecutive non-finite updates at env step " +
                                       std::to_string(step));
                }
            } else {
                consecutive_skips = 0;
                window.add(r);
                consistency_sum += r.consistency_error;
                ++consistency_count;
            }
        }

        // adversarial injection
        if (cfg.inject.active() && cfg.inject.interval > 0 && step % cfg.inject.interval == 0)
            inject_adversarial(buffer, model, cfg.inject.ratio, cfg.inject.strength, inject_rng);

        // metrics
        if (step % cfg.metrics_every == 0) {
            int n = std::max(1, window.updates);
            bool smoothing_active = step > cfg.effective_T();
            metrics << step << ',' << fmt(last_episode_return) << ',' << fmt(window.cons / n)
                    << ',' << fmt(window.dyn / n) << ',' << fmt(window.ex / n) << ','
                    << fmt(window.pen / n) << ',' << fmt(window.rew / n) << ','
                    << fmt(window.smt / n) << ',' << (smoothing_active ? 1 : 0) << "\n";
            window = {};
        }
    }
    metrics.close();

    save_checkpoint(result.checkpoint_path,
                    {&model.dyn, &model.rew, &model.critic, &planner.pi_beta, &planner.p_theta});

    result.env_steps = cfg.total_env_steps;
    result.mean_consistency_error =
        consistency_count ? consistency_sum / static_cast<double>(consistency_count) : 0.0;
    if (buffer.size() > 0)
        result.injected_fraction =
            static_cast<double>(count_perturbed(buffer)) / static_cast<double>(buffer.size());
    if (cfg.total_env_steps > 0 && cfg.eval_episodes > 0)
        result.eval = evaluate(*env, model, planner, cfg.eval_episodes, cfg.temp_floor,
                               eval_rng.next_u64());
    result.model = model;
    result.planner = planner;
    return result;
}

}  // namespace flexplore
