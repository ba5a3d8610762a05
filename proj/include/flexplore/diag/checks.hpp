#pragma once

#include <functional>

#include "flexplore/diag/dist1d.hpp"
#include "flexplore/train/trainer.hpp"

namespace flexplore {

// Empirical Lipschitz constant: sup over sampled pairs of the output/input
// distance ratio. A lower estimate of the true constant by construction.
inline double estimate_lipschitz(const std::function<Vec(const Vec&)>& fn,
                                 const std::function<Vec(Rng&)>& domain_sampler, int pairs,
                                 Rng& rng) {
    if (pairs < 1) throw std::invalid_argument("estimate_lipschitz: pairs must be >= 1");
    double best = 0.0;
    for (int i = 0; i < pairs; ++i) {
        Vec x1 = domain_sampler(rng);
        Vec x2 = domain_sampler(rng);
        Vec diff(x1.size());
        for (size_t j = 0; j < x1.size(); ++j) diff[j] = x1[j] - x2[j];
        double dx = norm2(diff);
        if (dx < 1e-12) continue;  // coincident pair
        Vec y1 = fn(x1), y2 = fn(x2);
        Vec dy(y1.size());
        for (size_t j = 0; j < y1.size(); ++j) dy[j] = y1[j] - y2[j];
        best = std::max(best, norm2(dy) / dx);
    }
    return best;
}

// analytic upper bound for an MLP: product of layer spectral norms times
// the activation slope bound per in-between activation
inline double mlp_lipschitz_upper_bound(const MlpSpec& spec, const ParamBlock& pb) {
    double bound = 1.0;
    for (size_t i = 0; i < pb.layers.size(); ++i) {
        bound *= spectral_norm(pb.layers[i].w, kSpectralItersVerify);
        bool last = (i + 1 == pb.layers.size());
        if (!(last && spec.linear_output)) {
            double slope = 1.0;
            if (spec.activation == Activation::Tanh || spec.activation == Activation::ReLU ||
                spec.activation == Activation::LeakyReLU)
                slope = 1.0;
            bound *= slope;
        }
    }
    return bound;
}

// ---------------------------------------------------------------------------
// Theorem sandwich on an analytically known 1-D Gaussian kernel pair.
//
// True kernel:    s' = s + drift + sigma * xi
// Learned kernel: s' = s + drift + shift + sigma * xi  (same sigma)
// so the exact one-step Wasserstein distance is |shift| at every state, the
// q(s)-mixture distance is |shift|, and the H-step composed kernels are
// Gaussians H*|shift| apart.
struct SandwichConfig {
    double drift = 0.1;
    double shift = 0.5;
    double sigma = 0.5;
    int H = 3;
    double gamma = 0.9;
    double s0_sigma = 0.5;  // spread of the initial-state distribution q(s)
    int batch = 256;
    int n_model_samples = 8;
    int critic_budget = 500;   // total ascent steps
    int critic_chunk = 50;     // steps per fresh-sample chunk
    double critic_lr = 1e-2;
    double penalty_weight = 100.0;
    int mix_states = 32;
    int mix_samples_per_state = 128;
    int lipschitz_pairs = 2000;
    uint64_t seed = 1;
};

struct SandwichReport {
    double loss_ex = 0.0;
    double se = 0.0;             // MC standard error of the loss_ex estimator
    double w_per_step = 0.0;     // exact |shift|
    double w_max = 0.0;          // max_t, equals |shift|
    double w_discounted_sum = 0.0;
    double w_mixture = 0.0;      // Cor 3.1 estimate over sampled initial states
    double w_composed = 0.0;     // exact H-step distance
    double lipschitz_bar = 0.0;  // estimated min(L_T, L_That)
    double cor32_ratio = 0.0;    // w_composed / sum_i L^i
    double critic_lipschitz = 0.0;
    bool lower_ok = false;   // loss_ex >= 0.95 max_t W - 3 SE
    bool upper_ok = false;   // loss_ex <= sum gamma^t W + 3 SE
    bool cor31_ok = false;   // mixture W lower-bounds loss_ex within slack
    bool cor32_ok = false;   // composed ratio lower-bounds loss_ex within slack
    bool inconclusive = false;  // critic failed to ascend to half the known W

    bool all_ok() const { return lower_ok && upper_ok && cor31_ok && cor32_ok; }
};

namespace detail {

// world model realizing the shifted Gaussian kernel exactly: a single
// affine dynamics layer with zero weights and the (delta, logvar) bias
inline WorldModel exact_gaussian_model(double mean_delta, double sigma, Rng& rng) {
    WorldModelConfig mc;
    mc.state_dim = 1;
    mc.K = 1;
    mc.z_dim = 0;
    mc.hidden = {};
    WorldModel m(mc, rng);
    m.dyn.layers[0].w.zero();
    m.dyn.layers[0].b[0] = mean_delta;
    m.dyn.layers[0].b[1] = 2.0 * std::log(sigma);
    return m;
}

}  // namespace detail

inline SandwichReport check_bound_sandwich(const SandwichConfig& cfg) {
    if (!(cfg.sigma > 0.0)) throw std::invalid_argument("sandwich: sigma must be > 0");
    if (2.0 * std::log(cfg.sigma) < -6.0 || 2.0 * std::log(cfg.sigma) > 2.0)
        throw std::invalid_argument("sandwich: sigma outside the representable logvar clamp");
    Rng rng(cfg.seed);
    Rng init_rng = rng.split();
    Rng seg_rng = rng.split();
    Rng critic_rng = rng.split();
    Rng eval_rng = rng.split();
    Rng mix_rng = rng.split();
    Rng lip_rng = rng.split();

    WorldModel model = detail::exact_gaussian_model(cfg.drift + cfg.shift, cfg.sigma, init_rng);
    model.cfg.adam.lr = cfg.critic_lr;
    model.cfg.critic_penalty_weight = cfg.penalty_weight;
    model.cfg.spectral_iters = kSpectralItersVerify;

    // true-kernel segments, dummy hybrid action (K = 1, no parameters)
    std::vector<Segment> batch(cfg.batch);
    for (auto& seg : batch) {
        seg.gamma = cfg.gamma;
        double s = cfg.s0_sigma * seg_rng.normal();
        for (int t = 0; t < cfg.H; ++t) {
            double s2 = s + cfg.drift + cfg.sigma * seg_rng.normal();
            seg.records.push_back({{s}, {0, {}}, 0.0, {s2}, false, false});
            s = s2;
        }
    }

    int remaining = cfg.critic_budget;
    while (remaining > 0) {
        int steps = std::min(remaining, cfg.critic_chunk);
        critic_adversarial_step(model, batch, steps, cfg.n_model_samples, critic_rng);
        remaining -= steps;
    }

    SandwichReport rep;
    rep.w_per_step = std::abs(cfg.shift);
    rep.w_max = rep.w_per_step;
    double g = 1.0;
    for (int t = 0; t < cfg.H; ++t) {
        rep.w_discounted_sum += g * rep.w_per_step;
        g *= cfg.gamma;
    }

    rep.loss_ex = loss_ex(model, batch, cfg.n_model_samples, eval_rng.split());

    // standard error of the estimator: per step, critic-value variances on
    // the true batch and on fresh model predictions
    g = 1.0;
    for (int t = 0; t < cfg.H; ++t) {
        std::vector<double> fv_true, fv_pred;
        for (const auto& seg : batch) {
            const SegRecord& rec = seg.records[t];
            fv_true.push_back(model.critic_at(rec.s_next));
            for (int ms = 0; ms < cfg.n_model_samples; ++ms) {
                Rng r2 = eval_rng.split();
                Prediction p = predict(model, rec.s, 0, {}, &r2);
                fv_pred.push_back(model.critic_at(p.sample));
            }
        }
        auto var_of = [](const std::vector<double>& v) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            return v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
        };
        double se_t = std::sqrt(var_of(fv_true) / fv_true.size() + var_of(fv_pred) / fv_pred.size());
        rep.se += g * se_t;
        g *= cfg.gamma;
    }

    // Cor 3.1: one-step mixture over sampled initial states
    {
        std::vector<double> true_cloud, model_cloud;
        for (int i = 0; i < cfg.mix_states; ++i) {
            double s0 = cfg.s0_sigma * mix_rng.normal();
            for (int j = 0; j < cfg.mix_samples_per_state; ++j) {
                true_cloud.push_back(s0 + cfg.drift + cfg.sigma * mix_rng.normal());
                Rng r2 = mix_rng.split();
                Prediction p = predict(model, {s0}, 0, {}, &r2);
                model_cloud.push_back(p.sample[0]);
            }
        }
        rep.w_mixture = wasserstein_1d(EmpiricalDist1D::samples(true_cloud),
                                       EmpiricalDist1D::samples(model_cloud));
    }

    // Cor 3.2: composed H-step kernels and the state-Lipschitz denominator
    rep.w_composed = cfg.H * rep.w_per_step;
    auto sampler = [](Rng& r) { return Vec{r.normal(0.0, 2.0)}; };
    double lip_true = estimate_lipschitz(
        [&](const Vec& s) { return Vec{s[0] + cfg.drift}; }, sampler, cfg.lipschitz_pairs, lip_rng);
    double lip_model = estimate_lipschitz(
        [&](const Vec& s) { return predict(model, s, 0, {}).mean; }, sampler,
        cfg.lipschitz_pairs, lip_rng);
    rep.lipschitz_bar = std::min(lip_true, lip_model);
    double denom = 0.0, li = 1.0;
    for (int i = 0; i < cfg.H; ++i) {
        denom += li;
        li *= rep.lipschitz_bar;
    }
    rep.cor32_ratio = rep.w_composed / denom;

    rep.critic_lipschitz = estimate_lipschitz(
        [&](const Vec& s) { return Vec{model.critic_at(s)}; }, sampler, cfg.lipschitz_pairs,
        lip_rng);

    bool shifted = rep.w_max > 0.0;
    rep.inconclusive = shifted && rep.loss_ex < 0.5 * rep.w_max;
    rep.lower_ok = rep.loss_ex >= 0.95 * rep.w_max - 3.0 * rep.se;
    rep.upper_ok = rep.loss_ex <= rep.w_discounted_sum + 3.0 * rep.se;
    // corollaries lower-bound loss_ex; same suboptimality + MC slack
    rep.cor31_ok = 0.95 * rep.w_mixture <= rep.loss_ex + 3.0 * rep.se;
    rep.cor32_ok = 0.95 * rep.cor32_ratio <= rep.loss_ex + 3.0 * rep.se;
    return rep;
}

// Mean one-step L2 gap between stored next states and the dynamics mean.
inline double dynamics_consistency_error(const WorldModel& m, const ReplayBuffer& buffer) {
    double sum = 0.0;
    size_t n = 0;
    buffer.for_each_transition([&](const Transition& tr) {
        Prediction p = predict(m, tr.s, tr.a.k, tr.a.z);
        double d2 = 0.0;
        for (size_t j = 0; j < tr.s_next.size(); ++j) {
            double d = tr.s_next[j] - p.mean[j];
            d2 += d * d;
        }
        sum += std::sqrt(d2);
        ++n;
    });
    if (n == 0) throw std::invalid_argument("dynamics_consistency_error: no data");
    return sum / static_cast<double>(n);
}

// Same gauge on freshly rolled random-policy episodes.
inline double dynamics_consistency_error(const WorldModel& m, const Env& env, int episodes,
                                         uint64_t seed) {
    if (episodes < 1) throw std::invalid_argument("dynamics_consistency_error: no data");
    Rng rng(seed);
    double sum = 0.0;
    size_t n = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        Vec s = env.reset(rng.next_u64());
        for (int t = 0; t < env.spec().max_episode_steps; ++t) {
            HybridAction a = random_action(env.spec(), rng);
            StepResult sr = env.step(s, a);
            Prediction p = predict(m, s, a.k, a.z);
            double d2 = 0.0;
            for (size_t j = 0; j < sr.next_state.size(); ++j) {
                double d = sr.next_state[j] - p.mean[j];
                d2 += d * d;
            }
            sum += std::sqrt(d2);
            ++n;
            s = sr.next_state;
            if (sr.done) break;
        }
    }
    return sum / static_cast<double>(n);
}

struct AdversarialEvalRow {
    double strength = 0.0;
    double eval_mean = 0.0;
    double eval_std = 0.0;
    double injected_fraction = 0.0;  // measured at the end of training
};

// Trains once per strength with FGSM injection active (paper ratio 0.1 by
// default) and reports the final clean-evaluation return.
inline std::vector<AdversarialEvalRow> adversarial_eval(const TrainConfig& base,
                                                        const std::vector<double>& strengths,
                                                        const std::string& out_root) {
    std::vector<AdversarialEvalRow> rows;
    for (double strength : strengths) {
        if (strength < 0.0) throw std::invalid_argument("adversarial_eval: strength must be >= 0");
        TrainConfig cfg = base;
        if (cfg.inject.ratio <= 0.0) cfg.inject.ratio = 0.1;
        cfg.inject.strength = strength;
        char tag[32];
        snprintf(tag, sizeof(tag), "strength_%g", strength);
        TrainResult res = train(cfg, out_root + "/" + tag);

        AdversarialEvalRow row;
        row.strength = strength;
        row.eval_mean = res.eval.mean;
        row.eval_std = res.eval.stddev;
        row.injected_fraction = res.injected_fraction;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace flexplore
