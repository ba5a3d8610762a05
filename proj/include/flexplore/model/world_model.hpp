#pragma once

#include <optional>
#include <vector>

#include "flexplore/core/checkpoint.hpp"
#include "flexplore/core/sampling.hpp"
#include "flexplore/core/tape.hpp"
#include "flexplore/model/segment.hpp"

namespace flexplore {

// Learned dynamics T_phi, reward head R_psi and the Lipschitz critic f_W.
//
// Dynamics take (s, one-hot(k), z zero-padded to the widest parameter
// vector) and emit a Gaussian over the next-state delta: mean offset and a
// log-variance clamped to [-6, 2]. The reward head shares the input
// encoding and emits a scalar. The critic maps states to one output and is
// the paper-specified 3-layer net with LeakyReLU after every layer.
struct WorldModelConfig {
    int state_dim = 0;
    int K = 0;
    int z_dim = 0;  // widest param_dim over k
    std::vector<int> hidden = {64, 64};
    int critic_hidden = 32;
    double logvar_lo = -6.0;
    double logvar_hi = 2.0;
    int spectral_iters = kSpectralItersTrain;
    // Weight on the (||W||_2 - 1)^2 terms. Unit weight cannot hold the
    // critic near Lipschitz 1 under sustained ascent: with loss scale L the
    // per-layer equilibrium norm is 2w/(2w - L), so w must dominate L.
    double critic_penalty_weight = 100.0;
    AdamConfig adam{};
};

struct WorldModel {
    WorldModelConfig cfg;
    MlpSpec dyn_spec, rew_spec, critic_spec;
    ParamBlock dyn, rew, critic;
    ParamBlock critic_init;  // pristine copy, restored if the critic diverges

    WorldModel() = default;

    WorldModel(const WorldModelConfig& c, Rng& rng) : cfg(c) {
        int in = c.state_dim + c.K + c.z_dim;
        dyn_spec = {in, c.hidden, 2 * c.state_dim, Activation::LeakyReLU, true};
        rew_spec = {in, c.hidden, 1, Activation::LeakyReLU, true};
        critic_spec = {c.state_dim, {c.critic_hidden}, 1, Activation::LeakyReLU, false};
        dyn = init_params(dyn_spec, "dyn", rng);
        rew = init_params(rew_spec, "rew", rng);
        critic = init_params(critic_spec, "critic", rng);
        critic_init = critic;
    }

    int input_dim() const { return cfg.state_dim + cfg.K + cfg.z_dim; }

    // [s | one-hot(k) | z padded]
    Vec encode(const Vec& s, int k, const Vec& z) const {
        if (static_cast<int>(s.size()) != cfg.state_dim)
            throw std::invalid_argument("world model: state dim mismatch");
        if (k < 0 || k >= cfg.K) throw std::invalid_argument("world model: k out of range");
        Vec x(input_dim(), 0.0);
        for (int i = 0; i < cfg.state_dim; ++i) x[i] = s[i];
        x[cfg.state_dim + k] = 1.0;
        for (size_t i = 0; i < z.size(); ++i) x[cfg.state_dim + cfg.K + i] = z[i];
        return x;
    }

    // action part only, for concatenation behind a taped state
    Vec encode_action(int k, const Vec& z) const {
        Vec x(cfg.K + cfg.z_dim, 0.0);
        x[k] = 1.0;
        for (size_t i = 0; i < z.size(); ++i) x[cfg.K + i] = z[i];
        return x;
    }

    double reward_at(const Vec& s, int k, const Vec& z) const {
        return mlp_forward(rew_spec, rew, encode(s, k, z))[0];
    }

    double critic_at(const Vec& s) const { return mlp_forward(critic_spec, critic, s)[0]; }
};

struct Prediction {
    Vec mean;
    Vec logvar;
    Vec sample;
};

// Gaussian next-state prediction; mean = s + predicted delta. With an rng
// the sample is a reparameterized draw, otherwise it equals the mean.
inline Prediction predict(const WorldModel& m, const Vec& s, int k, const Vec& z,
                          Rng* rng = nullptr) {
    if (!all_finite(s) || !all_finite(z))
        throw std::invalid_argument("predict: non-finite input");
    Vec out = mlp_forward(m.dyn_spec, m.dyn, m.encode(s, k, z));
    Prediction p;
    p.mean.resize(m.cfg.state_dim);
    p.logvar.resize(m.cfg.state_dim);
    for (int i = 0; i < m.cfg.state_dim; ++i) {
        p.mean[i] = s[i] + out[i];
        p.logvar[i] = std::clamp(out[m.cfg.state_dim + i], m.cfg.logvar_lo, m.cfg.logvar_hi);
    }
    p.sample = p.mean;
    if (rng)
        for (int i = 0; i < m.cfg.state_dim; ++i)
            p.sample[i] += std::exp(0.5 * p.logvar[i]) * rng->normal();
    return p;
}

// log T_phi(s_next | s, k, z) under the model's Gaussian head
inline double dyn_logpdf(const WorldModel& m, const Vec& s, int k, const Vec& z,
                         const Vec& s_next) {
    Prediction p = predict(m, s, k, z);
    Vec sigma(p.logvar.size());
    for (size_t i = 0; i < sigma.size(); ++i) sigma[i] = std::exp(0.5 * p.logvar[i]);
    return gaussian_logpdf(s_next, p.mean, sigma);
}

namespace detail {

inline void require_equal_lengths(const std::vector<Segment>& batch) {
    if (batch.empty()) throw std::invalid_argument("loss: empty segment batch");
    for (const auto& seg : batch) {
        seg.validate();
        if (seg.length() != batch.front().length())
            throw std::invalid_argument("loss: segments in a batch must share a length");
    }
}

// constant matrices per step: states, next states, action encodings, rewards
struct BatchView {
    int n = 0, len = 0;
    std::vector<Mat> s, s_next, act;
    std::vector<Vec> r;
    double gamma = 0.99;
};

inline BatchView make_view(const WorldModel& m, const std::vector<Segment>& batch) {
    require_equal_lengths(batch);
    BatchView v;
    v.n = static_cast<int>(batch.size());
    v.len = batch.front().length();
    v.gamma = batch.front().gamma;
    v.s.resize(v.len);
    v.s_next.resize(v.len);
    v.act.resize(v.len);
    v.r.assign(v.len, Vec(v.n, 0.0));
    for (int t = 0; t < v.len; ++t) {
        v.s[t] = Mat(v.n, m.cfg.state_dim);
        v.s_next[t] = Mat(v.n, m.cfg.state_dim);
        v.act[t] = Mat(v.n, m.cfg.K + m.cfg.z_dim);
        for (int i = 0; i < v.n; ++i) {
            const SegRecord& rec = batch[i].records[t];
            Vec enc = m.encode_action(rec.a.k, rec.a.z);
            for (int j = 0; j < m.cfg.state_dim; ++j) {
                v.s[t](i, j) = rec.s[j];
                v.s_next[t](i, j) = rec.s_next[j];
            }
            for (size_t j = 0; j < enc.size(); ++j) v.act[t](i, j) = enc[j];
            v.r[t][i] = rec.r;
        }
    }
    return v;
}

// mean + clamped logvar nodes of the dynamics head for a taped state node
struct DynHead {
    Tape::Id mean;
    Tape::Id logvar;
};

inline DynHead dyn_head(Tape& t, WorldModel& m, Tape::Id state_node, const Mat& act_enc,
                        bool accumulate) {
    Tape::Id x = t.concat_cols(state_node, t.leaf(act_enc));
    Tape::Id out = mlp_forward_tape(t, m.dyn_spec, m.dyn, x, accumulate);
    int d = m.cfg.state_dim;
    Tape::Id mean = t.add(state_node, t.slice_cols(out, 0, d));
    Tape::Id logvar = t.clamp(t.slice_cols(out, d, 2 * d), m.cfg.logvar_lo, m.cfg.logvar_hi);
    return {mean, logvar};
}

}  // namespace detail

// gamma-discounted MSE of H-step open-loop rollouts: each predicted state
// feeds the next prediction, starting from the window's first true state.
inline Tape::Id build_loss_org_dyn(Tape& t, WorldModel& m, const std::vector<Segment>& batch) {
    detail::BatchView v = detail::make_view(m, batch);
    Tape::Id state = t.leaf(v.s[0]);
    Tape::Id total = t.leaf(Mat(1, 1, 0.0));
    double g = 1.0;
    for (int step = 0; step < v.len; ++step) {
        detail::DynHead h = detail::dyn_head(t, m, state, v.act[step], true);
        Tape::Id err = t.square(t.sub(h.mean, t.leaf(v.s_next[step])));
        Tape::Id term = t.scale(t.sum_all(err), 1.0 / v.n);
        total = t.add(total, t.scale(term, g));
        g *= v.gamma;
        state = h.mean;
    }
    return total;
}

inline double loss_org_dyn(WorldModel& m, const std::vector<Segment>& batch) {
    Tape t;
    return t.scalar(build_loss_org_dyn(t, m, batch));
}

// Exploration loss: per step, |mean f(true next states) - mean f(predicted
// next states)| with gamma weights; the predicted side draws
// n_model_samples reparameterized one-step samples per segment from the
// current dynamics. grads_to_dyn selects which side of the adversarial game
// receives gradients; the critic is always evaluated frozen on the phi side
// and vice versa.
inline Tape::Id build_loss_ex(Tape& t, WorldModel& m, const std::vector<Segment>& batch,
                              int n_model_samples, Rng rng, bool grads_to_dyn) {
    if (n_model_samples < 1) throw std::invalid_argument("loss_ex: n_model_samples must be >= 1");
    detail::BatchView v = detail::make_view(m, batch);
    Tape::Id total = t.leaf(Mat(1, 1, 0.0));
    double g = 1.0;
    for (int step = 0; step < v.len; ++step) {
        Tape::Id f_true = mlp_forward_tape(t, m.critic_spec, m.critic, t.leaf(v.s_next[step]),
                                           !grads_to_dyn);
        Tape::Id mean_true = t.mean_all(f_true);

        // stack n_model_samples draws row-wise
        Tape::Id mean_pred;
        if (grads_to_dyn) {
            detail::DynHead h = detail::dyn_head(t, m, t.leaf(v.s[step]), v.act[step], true);
            Tape::Id sigma = t.exp(t.scale(h.logvar, 0.5));
            // draw noise in (segment, sample, coord) order to match the
            // critic-side estimator exactly
            std::vector<Mat> eps(n_model_samples, Mat(v.n, m.cfg.state_dim));
            for (int i = 0; i < v.n; ++i)
                for (int ms = 0; ms < n_model_samples; ++ms)
                    for (int j = 0; j < m.cfg.state_dim; ++j) eps[ms](i, j) = rng.normal();
            std::vector<Tape::Id> means;
            for (int ms = 0; ms < n_model_samples; ++ms) {
                Tape::Id sample = t.add(h.mean, t.mul(sigma, t.leaf(std::move(eps[ms]))));
                Tape::Id f_pred = mlp_forward_tape(t, m.critic_spec, m.critic, sample, false);
                means.push_back(t.mean_all(f_pred));
            }
            mean_pred = means[0];
            for (size_t i = 1; i < means.size(); ++i) mean_pred = t.add(mean_pred, means[i]);
            mean_pred = t.scale(mean_pred, 1.0 / n_model_samples);
        } else {
            // sample outside the tape: phi stays frozen on the critic side.
            // One batched dynamics pass; draws stay in (segment, sample,
            // coord) order.
            Mat inp(v.n, m.input_dim());
            for (int i = 0; i < v.n; ++i) {
                for (int j = 0; j < m.cfg.state_dim; ++j) inp(i, j) = v.s[step](i, j);
                for (int j = 0; j < v.act[step].cols; ++j)
                    inp(i, m.cfg.state_dim + j) = v.act[step](i, j);
            }
            Mat head = mlp_forward(m.dyn_spec, m.dyn, inp);
            int d = m.cfg.state_dim;
            Mat stacked(v.n * n_model_samples, d);
            for (int i = 0; i < v.n; ++i) {
                for (int ms = 0; ms < n_model_samples; ++ms) {
                    double* row = stacked.row(i * n_model_samples + ms);
                    for (int j = 0; j < d; ++j) {
                        double mean = v.s[step](i, j) + head(i, j);
                        double lv = std::clamp(head(i, d + j), m.cfg.logvar_lo, m.cfg.logvar_hi);
                        row[j] = mean + std::exp(0.5 * lv) * rng.normal();
                    }
                }
            }
            Tape::Id f_pred = mlp_forward_tape(t, m.critic_spec, m.critic, t.leaf(std::move(stacked)), true);
            mean_pred = t.mean_all(f_pred);
        }
        Tape::Id term = t.abs(t.sub(mean_true, mean_pred));
        total = t.add(total, t.scale(term, g));
        g *= v.gamma;
    }
    return total;
}

inline double loss_ex(WorldModel& m, const std::vector<Segment>& batch, int n_model_samples,
                      Rng rng) {
    Tape t;
    return t.scalar(build_loss_ex(t, m, batch, n_model_samples, rng, false));
}

// L_total_dyn = L_org_dyn + lambda * L_ex; the critic is a constant here,
// gradients reach only phi.
inline Tape::Id build_loss_total_dyn(Tape& t, WorldModel& m, const std::vector<Segment>& batch,
                                     double lambda, int n_model_samples, Rng rng) {
    if (lambda < 0.0) throw std::invalid_argument("loss_total_dyn: lambda must be >= 0");
    Tape::Id total = build_loss_org_dyn(t, m, batch);
    if (lambda > 0.0)
        total = t.add(total, t.scale(build_loss_ex(t, m, batch, n_model_samples, rng, true), lambda));
    return total;
}

inline double loss_total_dyn(WorldModel& m, const std::vector<Segment>& batch, double lambda,
                             int n_model_samples, Rng rng) {
    Tape t;
    return t.scalar(build_loss_total_dyn(t, m, batch, lambda, n_model_samples, rng));
}

// Spectral penalty sum_layers (||W||_2 - 1)^2 as a taped node.
inline Tape::Id build_spectral_penalty(Tape& t, ParamBlock& pb, int iters) {
    Tape::Id total = t.leaf(Mat(1, 1, 0.0));
    for (size_t li = 0; li < pb.layers.size(); ++li) {
        Tape::Id s = t.spectral_norm_node(pb, static_cast<int>(li), iters);
        total = t.add(total, t.square(t.add_const(s, -1.0)));
    }
    return total;
}

struct CriticStepInfo {
    double loss_ex = 0.0;       // value after the final ascent step
    double penalty = 0.0;       // spectral penalty at the final step
    bool reset = false;         // critic diverged and was re-initialized
};

// inner_steps ascent steps on loss_ex - penalty w.r.t. the critic only.
// Predicted states are sampled once and treated as constants, so phi never
// sees a gradient from here and the sample matrices are shared across the
// whole inner loop.
inline CriticStepInfo critic_adversarial_step(WorldModel& m, const std::vector<Segment>& batch,
                                              int inner_steps, int n_model_samples, Rng& rng) {
    if (inner_steps < 0) throw std::invalid_argument("critic_adversarial_step: inner_steps < 0");
    if (n_model_samples < 1)
        throw std::invalid_argument("critic_adversarial_step: n_model_samples must be >= 1");
    CriticStepInfo info;
    Rng sample_rng = rng.split();
    if (inner_steps == 0) return info;

    // constants of the inner game: true next states and one fixed draw of
    // model predictions per step, in (segment, sample, coord) order
    detail::BatchView v = detail::make_view(m, batch);
    int d = m.cfg.state_dim;
    std::vector<Mat> pred(v.len);
    for (int step = 0; step < v.len; ++step) {
        Mat inp(v.n, m.input_dim());
        for (int i = 0; i < v.n; ++i) {
            for (int j = 0; j < d; ++j) inp(i, j) = v.s[step](i, j);
            for (int j = 0; j < v.act[step].cols; ++j)
                inp(i, d + j) = v.act[step](i, j);
        }
        Mat head = mlp_forward(m.dyn_spec, m.dyn, inp);
        pred[step] = Mat(v.n * n_model_samples, d);
        for (int i = 0; i < v.n; ++i)
            for (int ms = 0; ms < n_model_samples; ++ms) {
                double* row = pred[step].row(i * n_model_samples + ms);
                for (int j = 0; j < d; ++j) {
                    double mean = v.s[step](i, j) + head(i, j);
                    double lv = std::clamp(head(i, d + j), m.cfg.logvar_lo, m.cfg.logvar_hi);
                    row[j] = mean + std::exp(0.5 * lv) * sample_rng.normal();
                }
            }
    }

    auto eval = [&](Tape& t) {
        Tape::Id total = t.leaf(Mat(1, 1, 0.0));
        double g = 1.0;
        for (int step = 0; step < v.len; ++step) {
            Tape::Id f_true =
                mlp_forward_tape(t, m.critic_spec, m.critic, t.leaf(v.s_next[step]), true);
            Tape::Id f_pred =
                mlp_forward_tape(t, m.critic_spec, m.critic, t.leaf(pred[step]), true);
            Tape::Id term = t.abs(t.sub(t.mean_all(f_true), t.mean_all(f_pred)));
            total = t.add(total, t.scale(term, g));
            g *= v.gamma;
        }
        return total;
    };

    for (int it = 0; it < inner_steps; ++it) {
        Tape t;
        Tape::Id lex = eval(t);
        Tape::Id pen = build_spectral_penalty(t, m.critic, m.cfg.spectral_iters);
        Tape::Id objective = t.add(t.neg(lex), t.scale(pen, m.cfg.critic_penalty_weight));  // minimize
        info.loss_ex = t.scalar(lex);
        info.penalty = t.scalar(pen);
        m.critic.zero_grads();
        t.backward(objective);
        try {
            adam_step(m.critic, m.cfg.adam);
        } catch (const std::runtime_error&) {
            info.reset = true;
            m.critic = m.critic_init;
            break;
        }
        if (!m.critic.params_finite()) {
            info.reset = true;
            m.critic = m.critic_init;
            break;
        }
    }
    if (!info.reset) {
        Tape t;
        info.loss_ex = t.scalar(eval(t));
        info.penalty = t.scalar(build_spectral_penalty(t, m.critic, m.cfg.spectral_iters));
    }
    return info;
}

// FGSM probe around s (Eq.-style one-step approximation of the inner max):
// draw s' ~ N(s, eps^2 I), then move eps along the sign of the gradient of
// the squared reward gap at s'.
inline Vec fgsm_perturb(WorldModel& m, const Vec& s, int k, const Vec& z, double eps, Rng& rng) {
    if (eps < 0.0) throw std::invalid_argument("fgsm_perturb: eps must be >= 0");
    if (eps == 0.0) return s;
    Vec s_prime(s.size());
    for (size_t i = 0; i < s.size(); ++i) s_prime[i] = s[i] + eps * rng.normal();

    double r_ref = m.reward_at(s, k, z);
    Tape t;
    Tape::Id x = t.leaf_row(s_prime);
    Tape::Id inp = t.concat_cols(x, t.leaf_row(m.encode_action(k, z)));
    Tape::Id r_tilde = mlp_forward_tape(t, m.rew_spec, m.rew, inp, false);
    Tape::Id gap = t.square(t.sub(t.leaf(Mat(1, 1, r_ref)), r_tilde));
    t.backward(gap);

    Vec out(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        double gi = t.grad(x).a[i];
        double sign = gi > 0.0 ? 1.0 : (gi < 0.0 ? -1.0 : 0.0);
        out[i] = s_prime[i] + eps * sign;
    }
    return out;
}

// Threshold-gated smoothing loss over one segment. Walking the segment with
// a running max (initialized to -100), only steps whose predicted reward
// beats the running max contribute a squared gap against their FGSM state.
inline Tape::Id build_loss_smt(Tape& t, WorldModel& m, const Segment& seg, double eps, Rng& rng) {
    seg.validate();
    Tape::Id total = t.leaf(Mat(1, 1, 0.0));
    double max_reward = -100.0;
    for (const SegRecord& rec : seg.records) {
        double r_hat = m.reward_at(rec.s, rec.a.k, rec.a.z);
        if (r_hat > max_reward) {
            Vec s_tilde = fgsm_perturb(m, rec.s, rec.a.k, rec.a.z, eps, rng);
            Mat enc = Mat::from_row(m.encode_action(rec.a.k, rec.a.z));
            Tape::Id r_s = mlp_forward_tape(
                t, m.rew_spec, m.rew, t.concat_cols(t.leaf_row(rec.s), t.leaf(enc)), true);
            Tape::Id r_tilde = mlp_forward_tape(
                t, m.rew_spec, m.rew, t.concat_cols(t.leaf_row(s_tilde), t.leaf(enc)), true);
            total = t.add(total, t.square(t.sub(r_s, r_tilde)));
        }
        max_reward = std::max(max_reward, r_hat);
    }
    return total;
}

inline double loss_smt(WorldModel& m, const Segment& seg, double eps, Rng rng) {
    Tape t;
    return t.scalar(build_loss_smt(t, m, seg, eps, rng));
}

// Reward loss against rewards observed at the true states, gamma-weighted,
// plus mu * L_smt once timestep exceeds the threshold T.
inline Tape::Id build_loss_org_rew(Tape& t, WorldModel& m, const std::vector<Segment>& batch) {
    detail::BatchView v = detail::make_view(m, batch);
    Tape::Id total = t.leaf(Mat(1, 1, 0.0));
    double g = 1.0;
    for (int step = 0; step < v.len; ++step) {
        Tape::Id x = t.concat_cols(t.leaf(v.s[step]), t.leaf(v.act[step]));
        Tape::Id r_hat = mlp_forward_tape(t, m.rew_spec, m.rew, x, true);
        Mat r_true(v.n, 1);
        for (int i = 0; i < v.n; ++i) r_true(i, 0) = v.r[step][i];
        Tape::Id err = t.square(t.sub(r_hat, t.leaf(std::move(r_true))));
        total = t.add(total, t.scale(t.sum_all(err), g / v.n));
        g *= v.gamma;
    }
    return total;
}

inline double loss_org_rew(WorldModel& m, const std::vector<Segment>& batch) {
    Tape t;
    return t.scalar(build_loss_org_rew(t, m, batch));
}

struct RewLossParts {
    Tape::Id total;
    double org = 0.0;
    double smt = 0.0;
    bool smoothing_active = false;
};

inline RewLossParts build_loss_total_rew(Tape& t, WorldModel& m,
                                         const std::vector<Segment>& batch, double mu,
                                         double eps, long timestep, long T, Rng rng) {
    if (mu < 0.0) throw std::invalid_argument("loss_total_rew: mu must be >= 0");
    RewLossParts parts;
    parts.total = build_loss_org_rew(t, m, batch);
    parts.org = t.scalar(parts.total);
    parts.smoothing_active = timestep > T;
    if (parts.smoothing_active && mu > 0.0) {
        Tape::Id smt = t.leaf(Mat(1, 1, 0.0));
        for (const Segment& seg : batch) smt = t.add(smt, build_loss_smt(t, m, seg, eps, rng));
        smt = t.scale(smt, 1.0 / static_cast<double>(batch.size()));
        parts.smt = t.scalar(smt);
        parts.total = t.add(parts.total, t.scale(smt, mu));
    }
    return parts;
}

inline double loss_total_rew(WorldModel& m, const std::vector<Segment>& batch, double mu,
                             double eps, long timestep, long T, Rng rng) {
    Tape t;
    return t.scalar(build_loss_total_rew(t, m, batch, mu, eps, timestep, T, rng).total);
}

}  // namespace flexplore
