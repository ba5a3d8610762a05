#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "flexplore/model/world_model.hpp"

namespace flexplore {

// MPC over hybrid actions. Each decision samples N H-step action sequences
// from the discrete head pi_beta and the per-action continuous head p_theta,
// rolls them out through the learned model scoring r_org + eta * r_aux,
// refits the heads on the top-n elites by maximum likelihood, and executes
// the first action of the best sequence from the final refinement round.
struct PlannerConfig {
    int N = 64;
    int n_elite = 6;
    int iters = 6;
    int H = 8;
    double gamma = 0.99;
    double eta = 0.01;
    double temperature = 1.0;  // current Gumbel temperature; annealed by the trainer
    double sigma_lo = 1e-3;
    double sigma_hi = 2.0;
    std::vector<int> hidden = {64, 64};
    AdamConfig adam{};

    void validate() const {
        if (N < 1 || n_elite < 1 || n_elite > N)
            throw std::invalid_argument("planner: need 1 <= n_elite <= N");
        if (H < 1 || iters < 1) throw std::invalid_argument("planner: H and iters must be >= 1");
        if (temperature <= 0.0) throw std::invalid_argument("planner: temperature must be > 0");
    }
};

struct PlannerState {
    PlannerConfig cfg;
    EnvSpec env;
    MlpSpec pi_spec, p_spec;
    ParamBlock pi_beta;   // state -> K logits
    ParamBlock p_theta;   // (state, one-hot k) -> (mu padded, log sigma padded)

    PlannerState() = default;

    PlannerState(const PlannerConfig& c, const EnvSpec& e, Rng& rng) : cfg(c), env(e) {
        cfg.validate();
        int zd = env.max_param_dim();
        pi_spec = {env.state_dim, cfg.hidden, env.K, Activation::LeakyReLU, true};
        p_spec = {env.state_dim + env.K, cfg.hidden, std::max(1, 2 * zd),
                  Activation::LeakyReLU, true};
        pi_beta = init_params(pi_spec, "pi_beta", rng);
        p_theta = init_params(p_spec, "p_theta", rng);
    }

    int z_dim() const { return env.max_param_dim(); }

    Vec logits(const Vec& s) const { return mlp_forward(pi_spec, pi_beta, s); }

    // mu and sigma (clamped) of z | s, k; sized param_dim(k)
    void z_head(const Vec& s, int k, Vec& mu, Vec& sigma) const {
        Vec in(env.state_dim + env.K, 0.0);
        for (int i = 0; i < env.state_dim; ++i) in[i] = s[i];
        in[env.state_dim + k] = 1.0;
        Vec out = mlp_forward(p_spec, p_theta, in);
        int dim = env.param_dims[k];
        mu.assign(dim, 0.0);
        sigma.assign(dim, 0.0);
        for (int i = 0; i < dim; ++i) {
            mu[i] = out[i];
            sigma[i] = std::clamp(std::exp(out[z_dim() + i]), cfg.sigma_lo, cfg.sigma_hi);
        }
    }

    // log p_theta(z | s, k); zero-parameter actions have log-density 0
    double z_logpdf(const Vec& s, int k, const Vec& z) const {
        if (env.param_dims[k] == 0) return 0.0;
        Vec mu, sigma;
        z_head(s, k, mu, sigma);
        return gaussian_logpdf(z, mu, sigma);
    }
};

struct SampledAction {
    HybridAction action;  // z clipped into env bounds
    Vec z_raw;            // pre-clip draw, used for density evaluation
};

inline SampledAction sample_hybrid_full(const PlannerState& p, const Vec& s, Rng& rng) {
    SampledAction out;
    Vec soft = gumbel_softmax(p.logits(s), p.cfg.temperature, rng);
    out.action.k = argmax(soft);
    int dim = p.env.param_dims[out.action.k];
    if (dim > 0) {
        Vec mu, sigma;
        p.z_head(s, out.action.k, mu, sigma);
        out.z_raw.resize(dim);
        for (int i = 0; i < dim; ++i) out.z_raw[i] = mu[i] + sigma[i] * rng.normal();
        out.action.z = out.z_raw;
        const auto& bounds = p.env.param_bounds[out.action.k];
        for (int i = 0; i < dim; ++i)
            out.action.z[i] = std::clamp(out.action.z[i], bounds[i].lo, bounds[i].hi);
    }
    return out;
}

inline HybridAction sample_hybrid(const PlannerState& p, const Vec& s, Rng& rng) {
    return sample_hybrid_full(p, s, rng).action;
}

// Variational mutual-information reward (single-sample estimate):
// log T_phi(s_next | s, k, z) - log p_theta(z | s, k). Used only during
// rollout scoring, never in any model-learning gradient.
inline double aux_reward(const WorldModel& m, const PlannerState& p, const Vec& s, int k,
                         const Vec& z, const Vec& s_next) {
    double lt = dyn_logpdf(m, s, k, z, s_next);
    double lp = p.z_logpdf(s, k, z);
    if (!std::isfinite(lt) || !std::isfinite(lp))
        throw std::runtime_error("aux_reward: degenerate density");
    return lt - lp;
}

struct CandidateTrajectory {
    std::vector<HybridAction> actions;  // H entries, clipped
    std::vector<Vec> z_raws;            // pre-clip draws
    std::vector<Vec> states;            // H + 1 model states
    double raw_return = 0.0;
    double aux_return = 0.0;
    double total_return = 0.0;
};

namespace detail {

// scalar-path rollout of a single candidate, used to resample rare
// non-finite rows from the batched pass
inline bool rollout_one(const WorldModel& m, const PlannerState& p, const Vec& s0, Rng& rng,
                        CandidateTrajectory& c) {
    c = {};
    c.states.push_back(s0);
    double g = 1.0;
    for (int t = 0; t < p.cfg.H; ++t) {
        SampledAction a = sample_hybrid_full(p, c.states.back(), rng);
        Prediction pred = predict(m, c.states.back(), a.action.k, a.action.z, &rng);
        double r = m.reward_at(c.states.back(), a.action.k, a.action.z);
        if (!all_finite(pred.sample) || !std::isfinite(r)) return false;
        double aux = 0.0;
        if (p.cfg.eta != 0.0) {
            Vec sigma(pred.logvar.size());
            for (size_t i = 0; i < sigma.size(); ++i) sigma[i] = std::exp(0.5 * pred.logvar[i]);
            aux = gaussian_logpdf(pred.sample, pred.mean, sigma) -
                  p.z_logpdf(c.states.back(), a.action.k, a.z_raw);
            if (!std::isfinite(aux)) return false;
        }
        c.actions.push_back(a.action);
        c.z_raws.push_back(a.z_raw);
        c.raw_return += g * r;
        c.aux_return += g * aux;
        c.states.push_back(pred.sample);
        g *= p.cfg.gamma;
    }
    c.total_return = c.raw_return + p.cfg.eta * c.aux_return;
    return true;
}

}  // namespace detail

// N open-loop stochastic rollouts through the model, advanced step-wise so
// each network runs once per step on an N-row batch. A candidate whose
// rollout turns non-finite is discarded and resampled (up to 3 attempts).
inline std::vector<CandidateTrajectory> rollout_candidates(const WorldModel& m,
                                                           const PlannerState& p, const Vec& s0,
                                                           Rng& rng, int* resample_warnings = nullptr) {
    const int N = p.cfg.N;
    const int d = p.env.state_dim;
    const int K = p.env.K;
    const int zd = p.z_dim();
    std::vector<CandidateTrajectory> out(N);
    std::vector<char> alive(N, 1);
    Mat states(N, d);
    for (int n = 0; n < N; ++n) {
        out[n].states.push_back(s0);
        for (int j = 0; j < d; ++j) states(n, j) = s0[j];
    }

    double g = 1.0;
    std::vector<int> ks(N);
    for (int t = 0; t < p.cfg.H; ++t) {
        Mat logits = mlp_forward(p.pi_spec, p.pi_beta, states);
        // executed k = argmax of the Gumbel-Softmax soft sample, which is
        // the argmax of (logit + gumbel) for any temperature
        for (int n = 0; n < N; ++n) {
            const double* row = logits.row(n);
            int best = 0;
            double best_v = row[0] + rng.gumbel();
            for (int j = 1; j < K; ++j) {
                double v = row[j] + rng.gumbel();
                if (v > best_v) {
                    best_v = v;
                    best = j;
                }
            }
            ks[n] = best;
        }
        Mat p_in(N, d + K);
        for (int n = 0; n < N; ++n) {
            for (int j = 0; j < d; ++j) p_in(n, j) = states(n, j);
            p_in(n, d + ks[n]) = 1.0;
        }
        Mat p_out = mlp_forward(p.p_spec, p.p_theta, p_in);
        Mat dyn_in(N, d + K + zd);
        std::vector<Vec> z_raws(N), z_clips(N);
        std::vector<double> logp_z(N, 0.0);
        for (int n = 0; n < N; ++n) {
            int dim = p.env.param_dims[ks[n]];
            Vec z_raw(dim), z_clip(dim);
            double lp = 0.0;
            for (int i = 0; i < dim; ++i) {
                double mu = p_out(n, i);
                double sigma = std::clamp(std::exp(p_out(n, zd + i)), p.cfg.sigma_lo, p.cfg.sigma_hi);
                z_raw[i] = mu + sigma * rng.normal();
                const Interval& b = p.env.param_bounds[ks[n]][i];
                z_clip[i] = std::clamp(z_raw[i], b.lo, b.hi);
                double dd = z_raw[i] - mu;
                constexpr double kLog2Pi = 1.8378770664093454836;
                lp += -std::log(sigma) - 0.5 * kLog2Pi - dd * dd / (2.0 * sigma * sigma);
            }
            logp_z[n] = lp;
            for (int j = 0; j < d; ++j) dyn_in(n, j) = states(n, j);
            dyn_in(n, d + ks[n]) = 1.0;
            for (int i = 0; i < dim; ++i) dyn_in(n, d + K + i) = z_clip[i];
            z_raws[n] = std::move(z_raw);
            z_clips[n] = std::move(z_clip);
        }
        Mat dyn_out = mlp_forward(m.dyn_spec, m.dyn, dyn_in);
        Mat rew_out = mlp_forward(m.rew_spec, m.rew, dyn_in);
        for (int n = 0; n < N; ++n) {
            if (!alive[n]) continue;
            double r = rew_out(n, 0);
            double aux = 0.0;
            Vec next(d);
            constexpr double kLog2Pi = 1.8378770664093454836;
            for (int j = 0; j < d; ++j) {
                double mean = states(n, j) + dyn_out(n, j);
                double lv = std::clamp(dyn_out(n, d + j), m.cfg.logvar_lo, m.cfg.logvar_hi);
                double sigma = std::exp(0.5 * lv);
                double eps = rng.normal();
                next[j] = mean + sigma * eps;
                if (p.cfg.eta != 0.0)
                    aux += -0.5 * lv - 0.5 * kLog2Pi - eps * eps * 0.5;
            }
            if (p.cfg.eta != 0.0) aux -= logp_z[n];
            if (!std::isfinite(r) || !all_finite(next) || !std::isfinite(aux)) {
                alive[n] = 0;
                continue;
            }
            CandidateTrajectory& c = out[n];
            c.actions.push_back({ks[n], z_clips[n]});
            c.z_raws.push_back(z_raws[n]);
            c.raw_return += g * r;
            c.aux_return += g * aux;
            c.states.push_back(next);
            for (int j = 0; j < d; ++j) states(n, j) = next[j];
        }
        g *= p.cfg.gamma;
    }
    for (int n = 0; n < N; ++n) {
        if (alive[n]) {
            out[n].total_return = out[n].raw_return + p.cfg.eta * out[n].aux_return;
            continue;
        }
        bool ok = false;
        for (int attempt = 0; attempt < 3 && !ok; ++attempt) {
            if (resample_warnings) ++(*resample_warnings);
            ok = detail::rollout_one(m, p, s0, rng, out[n]);
        }
        if (!ok) throw std::runtime_error("rollout_candidates: non-finite rollouts after 3 attempts");
    }
    return out;
}

// indices of the top n_elite candidates by total_return, ties by lower index
inline std::vector<int> elite_indices(const std::vector<CandidateTrajectory>& cands, int n_elite) {
    std::vector<int> idx(cands.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return cands[a].total_return > cands[b].total_return;
    });
    idx.resize(std::min<size_t>(n_elite, idx.size()));
    return idx;
}

// Taped mean negative log-likelihood of the elite (k, z) pairs under the
// current heads, conditioned on their rollout states.
inline Tape::Id build_elite_nll(Tape& t, PlannerState& p,
                                const std::vector<CandidateTrajectory>& cands) {
    std::vector<int> elite = elite_indices(cands, p.cfg.n_elite);
    Tape::Id nll = t.leaf(Mat(1, 1, 0.0));
    int terms = 0;
    int zd = p.z_dim();
    for (int ei : elite) {
        const CandidateTrajectory& c = cands[ei];
        for (size_t step = 0; step < c.actions.size(); ++step) {
            const Vec& s = c.states[step];
            const HybridAction& a = c.actions[step];
            Tape::Id logits = mlp_forward_tape(t, p.pi_spec, p.pi_beta, t.leaf_row(s), true);
            nll = t.add(nll, t.neg(t.pick(t.log(t.softmax_rows(logits)), 0, a.k)));
            if (!a.z.empty()) {
                Vec in(p.env.state_dim + p.env.K, 0.0);
                for (int i = 0; i < p.env.state_dim; ++i) in[i] = s[i];
                in[p.env.state_dim + a.k] = 1.0;
                Tape::Id out = mlp_forward_tape(t, p.p_spec, p.p_theta, t.leaf_row(in), true);
                int dim = static_cast<int>(a.z.size());
                Tape::Id mu = t.slice_cols(out, 0, dim);
                Tape::Id sigma = t.clamp(t.exp(t.slice_cols(out, zd, zd + dim)),
                                         p.cfg.sigma_lo, p.cfg.sigma_hi);
                Tape::Id logvar = t.scale(t.log(sigma), 2.0);
                nll = t.add(nll, t.neg(t.sum_all(t.gaussian_logpdf(mu, logvar, Mat::from_row(a.z)))));
            }
            ++terms;
        }
    }
    return terms > 0 ? t.scale(nll, 1.0 / terms) : nll;
}

// One maximum-likelihood Adam step on the elites.
inline void elite_update(PlannerState& p, const std::vector<CandidateTrajectory>& cands) {
    if (cands.empty()) throw std::invalid_argument("elite_update: empty candidate set");
    Tape t;
    Tape::Id loss = build_elite_nll(t, p, cands);
    p.pi_beta.zero_grads();
    p.p_theta.zero_grads();
    t.backward(loss);
    adam_step(p.pi_beta, p.cfg.adam);
    adam_step(p.p_theta, p.cfg.adam);
}

struct PlanRound {
    int round = 0;
    double best_total = 0.0;
    double mean_total = 0.0;
    std::vector<int> elite_k_hist;  // first-step discrete action counts among elites
};

using PlanTrace = std::vector<PlanRound>;

// iters rounds of rollout + elite refit; returns the first action of the
// best trajectory from the final round.
inline HybridAction plan(const WorldModel& m, PlannerState& p, const Vec& s, Rng& rng,
                         PlanTrace* trace = nullptr, int* resample_warnings = nullptr) {
    std::vector<CandidateTrajectory> cands;
    for (int round = 0; round < p.cfg.iters; ++round) {
        cands = rollout_candidates(m, p, s, rng, resample_warnings);
        elite_update(p, cands);
        if (trace) {
            PlanRound pr;
            pr.round = round;
            pr.best_total = cands[0].total_return;
            double sum = 0.0;
            for (const auto& c : cands) {
                sum += c.total_return;
                pr.best_total = std::max(pr.best_total, c.total_return);
            }
            pr.mean_total = sum / cands.size();
            pr.elite_k_hist.assign(p.env.K, 0);
            for (int ei : elite_indices(cands, p.cfg.n_elite))
                if (!cands[ei].actions.empty()) pr.elite_k_hist[cands[ei].actions[0].k]++;
            trace->push_back(pr);
        }
    }
    int best = elite_indices(cands, 1)[0];
    return cands[best].actions.front();
}

// Greedy evaluation variant: refinement runs on scratch copies, the stored
// heads are left untouched.
inline HybridAction plan_greedy(const WorldModel& m, const PlannerState& p, const Vec& s,
                                Rng& rng) {
    PlannerState scratch = p;
    return plan(m, scratch, s, rng);
}

}  // namespace flexplore
