#include <catch2/catch_amalgamated.hpp>

#include "flexplore/model/world_model.hpp"
#include "test_util.hpp"

using namespace flexplore;

namespace {

WorldModel tiny_model(int state_dim, int K, int z_dim, uint64_t seed,
                      std::vector<int> hidden = {8}) {
    WorldModelConfig mc;
    mc.state_dim = state_dim;
    mc.K = K;
    mc.z_dim = z_dim;
    mc.hidden = std::move(hidden);
    Rng rng(seed);
    return WorldModel(mc, rng);
}

// scalar-state model whose dynamics are an exact linear map
// s' = a*s + b*z + c with log-variance lv (single affine dynamics layer)
WorldModel exact_linear_model(double a, double b, double c, double lv, uint64_t seed) {
    WorldModelConfig mc;
    mc.state_dim = 1;
    mc.K = 1;
    mc.z_dim = 1;
    mc.hidden = {};
    Rng rng(seed);
    WorldModel m(mc, rng);
    m.dyn.layers[0].w.zero();
    m.dyn.layers[0].w(0, 0) = a - 1.0;  // delta head: mean = s + (a-1) s + b z + c
    m.dyn.layers[0].w(0, 2) = b;
    m.dyn.layers[0].b[0] = c;
    m.dyn.layers[0].b[1] = lv;
    m.dyn.layers[0].w(1, 0) = 0.0;
    return m;
}

// critic computing exactly f(s) = s0 on positive states: first layer shifts
// by a large constant to stay in the linear region of LeakyReLU
void make_linear_critic(WorldModel& m) {
    const double C = 100.0;
    m.critic.layers[0].w.zero();
    m.critic.layers[0].w(0, 0) = 1.0;
    std::fill(m.critic.layers[0].b.begin(), m.critic.layers[0].b.end(), 0.0);
    m.critic.layers[0].b[0] = C;
    m.critic.layers[1].w.zero();
    m.critic.layers[1].w(0, 0) = 1.0;
    m.critic.layers[1].b[0] = -C;
}

Segment make_segment(const std::vector<double>& states, const std::vector<double>& zs,
                     const std::vector<double>& rewards, double gamma) {
    Segment seg;
    seg.gamma = gamma;
    for (size_t t = 0; t + 1 < states.size(); ++t) {
        SegRecord rec;
        rec.s = {states[t]};
        rec.a = {0, {zs[t]}};
        rec.r = rewards[t];
        rec.s_next = {states[t + 1]};
        seg.records.push_back(rec);
    }
    return seg;
}

}  // namespace

TEST_CASE("predict: zero final layer gives mean = s (delta identity)", "[world_model]") {
    WorldModel m = tiny_model(3, 2, 1, 4);
    m.dyn.layers.back().w.zero();
    std::fill(m.dyn.layers.back().b.begin(), m.dyn.layers.back().b.end(), 0.0);
    Vec s{0.4, -1.2, 2.0};
    Prediction p = predict(m, s, 1, {0.5});
    REQUIRE(p.mean == s);
    REQUIRE(p.sample == s);
}

TEST_CASE("predict: log-variance is clamped to [-6, 2]", "[world_model]") {
    WorldModel m = tiny_model(2, 1, 0, 9);
    m.dyn.layers.back().b[2] = -50.0;
    m.dyn.layers.back().b[3] = 50.0;
    m.dyn.layers.back().w.zero();
    Prediction p = predict(m, {0.1, 0.2}, 0, {});
    REQUIRE(p.logvar[0] == -6.0);
    REQUIRE(p.logvar[1] == 2.0);
}

TEST_CASE("predict rejects non-finite input", "[world_model]") {
    WorldModel m = tiny_model(1, 1, 0, 2);
    REQUIRE_THROWS_AS(predict(m, {std::numeric_limits<double>::quiet_NaN()}, 0, {}),
                      std::invalid_argument);
}

TEST_CASE("predict: trains to a synthetic linear system", "[world_model]") {
    // s' = 0.9 s + 0.1 z, deterministic
    WorldModel m = tiny_model(1, 1, 1, 77, {16});
    Rng rng(5);
    AdamConfig opt;
    opt.lr = 3e-3;
    for (int it = 0; it < 1500; ++it) {
        std::vector<Segment> batch;
        for (int b = 0; b < 8; ++b) {
            double s = rng.uniform(-1.0, 1.0);
            double z = rng.uniform(-1.0, 1.0);
            double s2 = 0.9 * s + 0.1 * z;
            Segment seg;
            seg.gamma = 0.99;
            seg.records.push_back({{s}, {0, {z}}, 0.0, {s2}, false, false});
            batch.push_back(seg);
        }
        Tape t;
        Tape::Id loss = build_loss_org_dyn(t, m, batch);
        m.dyn.zero_grads();
        t.backward(loss);
        adam_step(m.dyn, opt);
    }
    double rms = 0.0;
    int n = 200;
    for (int i = 0; i < n; ++i) {
        double s = rng.uniform(-1.0, 1.0);
        double z = rng.uniform(-1.0, 1.0);
        double truth = 0.9 * s + 0.1 * z;
        Prediction p = predict(m, {s}, 0, {z});
        rms += (p.mean[0] - truth) * (p.mean[0] - truth);
    }
    rms = std::sqrt(rms / n);
    REQUIRE(rms < 0.02);
}

TEST_CASE("loss_org_dyn: perfect model on a deterministic env gives 0", "[world_model]") {
    WorldModel m = exact_linear_model(0.9, 0.1, 0.0, -6.0, 3);
    std::vector<Segment> batch;
    Rng rng(8);
    for (int b = 0; b < 4; ++b) {
        double s = rng.uniform(-1.0, 1.0);
        Segment seg;
        seg.gamma = 0.9;
        for (int t = 0; t < 3; ++t) {
            double z = rng.uniform(-1.0, 1.0);
            double s2 = 0.9 * s + 0.1 * z;
            seg.records.push_back({{s}, {0, {z}}, 0.0, {s2}, false, false});
            s = s2;
        }
        batch.push_back(seg);
    }
    REQUIRE(loss_org_dyn(m, batch) == Catch::Approx(0.0).margin(1e-18));
}

TEST_CASE("loss_org_dyn: one transition off by norm 2 gives 4", "[world_model]") {
    // model predicts identity (delta zero); env moves by (2, 0)
    WorldModel m = tiny_model(2, 1, 0, 21);
    m.dyn.layers.back().w.zero();
    std::fill(m.dyn.layers.back().b.begin(), m.dyn.layers.back().b.end(), 0.0);
    Segment seg;
    seg.gamma = 0.9;
    seg.records.push_back({{1.0, 1.0}, {0, {}}, 0.0, {3.0, 1.0}, false, false});
    REQUIRE(loss_org_dyn(m, {seg}) == Catch::Approx(4.0).margin(1e-12));
}

TEST_CASE("loss_org_dyn: open-loop discounted sum matches a manual oracle", "[world_model]") {
    // wrong linear model vs a hand-run open-loop rollout
    double a_env = 0.8, a_model = 0.95;
    WorldModel m = exact_linear_model(a_model, 0.0, 0.05, -2.0, 5);
    double gamma = 0.9;
    // hand env: s_{t+1} = 0.8 s_t, 3 steps from s0 = 1
    std::vector<double> states{1.0, 0.8, 0.64, 0.512};
    Segment seg = make_segment(states, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, gamma);
    // manual open-loop: shat_0 = 1; shat_{t+1} = 0.95 shat_t + 0.05
    double shat = 1.0, expected = 0.0, g = 1.0;
    for (int t = 0; t < 3; ++t) {
        double pred = a_model * shat + 0.05;
        double err = states[t + 1] - pred;
        expected += g * err * err;
        g *= gamma;
        shat = pred;
    }
    REQUIRE(loss_org_dyn(m, {seg}) == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("loss_ex: predicted states identical to true states give exactly 0", "[world_model]") {
    // generate the segment by rolling the model itself; the same seed then
    // reproduces identical samples inside loss_ex, for any critic
    WorldModel m = exact_linear_model(0.9, 0.0, 0.1, -1.0, 31);
    const uint64_t kSeed = 424242;
    Rng gen(kSeed);
    Segment seg;
    seg.gamma = 0.9;
    double s = 0.7;
    for (int t = 0; t < 4; ++t) {
        Prediction p = predict(m, {s}, 0, {}, &gen);
        seg.records.push_back({{s}, {0, {}}, 0.0, {p.sample[0]}, false, false});
        s = p.sample[0];
    }
    double l = loss_ex(m, {seg}, 1, Rng(kSeed));
    REQUIRE(l == 0.0);
}

TEST_CASE("loss_ex: frozen linear critic matches the manual discounted oracle", "[world_model]") {
    WorldModel m = exact_linear_model(1.0, 0.0, 0.3, -1.2, 13);
    make_linear_critic(m);
    double gamma = 0.85;
    std::vector<Segment> batch;
    Rng rng(17);
    for (int b = 0; b < 3; ++b) {
        double s = rng.uniform(1.0, 2.0);  // keep states positive for the linear critic
        Segment seg;
        seg.gamma = gamma;
        for (int t = 0; t < 3; ++t) {
            double s2 = s + rng.uniform(0.1, 0.4);
            seg.records.push_back({{s}, {0, {}}, 0.0, {s2}, false, false});
            s = s2;
        }
        batch.push_back(seg);
    }
    const uint64_t kSeed = 99;
    int n_samples = 3;
    double value = loss_ex(m, batch, n_samples, Rng(kSeed));

    // mirror the estimator arithmetic with plain loops and the same draws
    Rng mirror(kSeed);
    double expected = 0.0, g = 1.0;
    for (int t = 0; t < 3; ++t) {
        double mean_true = 0.0, mean_pred = 0.0;
        for (const Segment& seg : batch) mean_true += seg.records[t].s_next[0];
        mean_true /= batch.size();
        for (const Segment& seg : batch) {
            for (int ms = 0; ms < n_samples; ++ms) {
                Prediction p = predict(m, seg.records[t].s, 0, {}, &mirror);
                mean_pred += p.sample[0];
            }
        }
        mean_pred /= (batch.size() * n_samples);
        expected += g * std::abs(mean_true - mean_pred);
        g *= gamma;
    }
    REQUIRE(value == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("loss_ex is nonnegative", "[world_model]") {
    WorldModel m = tiny_model(2, 2, 1, 7);
    Rng rng(3);
    std::vector<Segment> batch;
    for (int b = 0; b < 4; ++b) {
        Segment seg;
        seg.gamma = 0.95;
        Vec s{rng.normal(), rng.normal()};
        for (int t = 0; t < 2; ++t) {
            Vec s2{rng.normal(), rng.normal()};
            seg.records.push_back({s, {rng.uniform_int(2), {rng.normal()}}, 0.0, s2, false, false});
            s = s2;
        }
        batch.push_back(seg);
    }
    REQUIRE(loss_ex(m, batch, 2, Rng(1)) >= 0.0);
    REQUIRE_THROWS_AS(loss_ex(m, {}, 2, Rng(1)), std::invalid_argument);
}

TEST_CASE("critic_adversarial_step: zero inner steps leave the critic unchanged",
          "[world_model]") {
    WorldModel m = tiny_model(1, 1, 0, 19);
    ParamBlock before = m.critic;
    Segment seg;
    seg.gamma = 0.9;
    seg.records.push_back({{0.0}, {0, {}}, 0.0, {0.5}, false, false});
    Rng rng(2);
    critic_adversarial_step(m, {seg}, 0, 2, rng);
    for (size_t li = 0; li < before.layers.size(); ++li)
        REQUIRE(m.critic.layers[li].w.a == before.layers[li].w.a);
}

TEST_CASE("critic ascent reaches the Kantorovich dual on disjoint clouds", "[world_model]") {
    // true next states near d, model predictions near 0: optimal 1-Lipschitz
    // f attains exactly d on the line
    const double d = 1.2;
    WorldModel m = exact_linear_model(0.0, 0.0, 0.0, -6.0, 23);  // model: s' ~ 0 (tight)
    Rng rng(11);
    std::vector<Segment> batch;
    for (int b = 0; b < 64; ++b) {
        Segment seg;
        seg.gamma = 0.9;
        double s = 0.002 * rng.normal();
        double s2 = d + 0.002 * rng.normal();
        seg.records.push_back({{s}, {0, {}}, 0.0, {s2}, false, false});
        batch.push_back(seg);
    }
    m.cfg.adam.lr = 2e-2;
    Rng crng(7);
    critic_adversarial_step(m, batch, 200, 4, crng);
    double per_step = loss_ex(m, batch, 4, Rng(5));  // single-step segments
    REQUIRE(per_step >= 0.9 * d);
    REQUIRE(per_step <= 1.1 * d);
    // soft spectral constraint keeps per-layer norms in the wide band
    for (const auto& layer : m.critic.layers) {
        double sn = spectral_norm(layer.w, kSpectralItersVerify);
        REQUIRE(sn >= 0.5);
        REQUIRE(sn <= 2.0);
    }
}

TEST_CASE("loss_total_dyn: lambda 0 equals the plain dynamics loss", "[world_model]") {
    WorldModel m = tiny_model(2, 1, 1, 41);
    Rng rng(6);
    Segment seg;
    seg.gamma = 0.9;
    seg.records.push_back({{0.1, 0.2}, {0, {0.3}}, 0.0, {0.2, 0.1}, false, false});
    REQUIRE(loss_total_dyn(m, {seg}, 0.0, 4, Rng(3)) ==
            Catch::Approx(loss_org_dyn(m, {seg})).margin(1e-15));
}

TEST_CASE("loss_total_dyn: additivity on a one-transition batch", "[world_model]") {
    WorldModel m = tiny_model(1, 1, 0, 43);
    Segment seg;
    seg.gamma = 0.9;
    seg.records.push_back({{0.4}, {0, {}}, 0.0, {0.9}, false, false});
    const uint64_t kSeed = 77;
    double lorg_value = loss_org_dyn(m, {seg});
    double lex = loss_ex(m, {seg}, 4, Rng(kSeed));
    double total = loss_total_dyn(m, {seg}, 1.0, 4, Rng(kSeed));
    REQUIRE(total == Catch::Approx(lorg_value + lex).margin(1e-12));
}

TEST_CASE("gradient isolation: dynamics loss never touches the critic and vice versa",
          "[world_model]") {
    WorldModel m = tiny_model(2, 2, 1, 51);
    Rng rng(9);
    std::vector<Segment> batch;
    for (int b = 0; b < 3; ++b) {
        Segment seg;
        seg.gamma = 0.9;
        Vec s{rng.normal(), rng.normal()};
        for (int t = 0; t < 2; ++t) {
            Vec s2{rng.normal(), rng.normal()};
            seg.records.push_back({s, {rng.uniform_int(2), {rng.normal()}}, 0.0, s2, false, false});
            s = s2;
        }
        batch.push_back(seg);
    }
    // phi-side loss: critic gradients must stay exactly zero
    m.critic.zero_grads();
    m.dyn.zero_grads();
    Tape t;
    Tape::Id total = build_loss_total_dyn(t, m, batch, 0.7, 2, Rng(4));
    t.backward(total);
    for (const auto& g : m.critic.grads) {
        for (double v : g.w.a) REQUIRE(v == 0.0);
        for (double v : g.b) REQUIRE(v == 0.0);
    }
    bool dyn_has_grad = false;
    for (const auto& g : m.dyn.grads)
        for (double v : g.w.a) dyn_has_grad |= (v != 0.0);
    REQUIRE(dyn_has_grad);

    // critic-side ascent: dynamics gradients must stay exactly zero
    m.dyn.zero_grads();
    Rng crng(8);
    critic_adversarial_step(m, batch, 3, 2, crng);
    for (const auto& g : m.dyn.grads) {
        for (double v : g.w.a) REQUIRE(v == 0.0);
        for (double v : g.b) REQUIRE(v == 0.0);
    }
}

TEST_CASE("fgsm: epsilon 0 returns the state exactly", "[world_model]") {
    WorldModel m = tiny_model(3, 2, 1, 61);
    Vec s{0.3, -0.8, 1.1};
    Rng rng(5);
    Vec out = fgsm_perturb(m, s, 1, {0.2}, 0.0, rng);
    REQUIRE(out == s);
}

TEST_CASE("fgsm: gradient sign agrees with finite differences", "[world_model][acceptance4]") {
    int agree = 0, total = 0;
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        WorldModel m = tiny_model(4, 2, 2, seed * 3 + 1, {12});
        Rng rng(seed);
        Vec s(4);
        for (auto& v : s) v = rng.uniform(-1.0, 1.0);
        int k = rng.uniform_int(2);
        Vec z{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        double eps = 0.15;

        // reproduce the internal draw of s' to compare signs at the same point
        Rng mirror = rng;  // fgsm uses the rng stream for s' only
        Vec s_prime(s.size());
        for (size_t i = 0; i < s.size(); ++i) s_prime[i] = s[i] + eps * mirror.normal();
        Vec s_tilde = fgsm_perturb(m, s, k, z, eps, rng);

        double r_ref = m.reward_at(s, k, z);
        auto gap = [&](const Vec& st) {
            double r = m.reward_at(st, k, z);
            return (r_ref - r) * (r_ref - r);
        };
        for (size_t i = 0; i < s.size(); ++i) {
            Vec up = s_prime, dn = s_prime;
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            double g_fd = (gap(up) - gap(dn)) / 2e-6;
            if (std::abs(g_fd) < 1e-12) continue;  // flat coordinate, sign undefined
            double step = s_tilde[i] - s_prime[i];
            ++total;
            if ((g_fd > 0 && step > 0) || (g_fd < 0 && step < 0)) ++agree;
        }
    }
    REQUIRE(total > 0);
    REQUIRE(static_cast<double>(agree) / total >= 0.99);
}

TEST_CASE("fgsm: linear reward net follows the analytic gradient", "[world_model]") {
    // single linear layer: R(s) = w . s + c, so the squared-gap gradient at
    // s' is -2 (R(s) - R(s')) w
    WorldModelConfig mc;
    mc.state_dim = 3;
    mc.K = 1;
    mc.z_dim = 0;
    mc.hidden = {};
    Rng init(71);
    WorldModel m(mc, init);
    for (auto& v : m.rew.layers[0].w.a) v = 0.0;
    m.rew.layers[0].w(0, 0) = 0.7;
    m.rew.layers[0].w(0, 1) = -1.3;
    m.rew.layers[0].w(0, 2) = 0.4;
    m.rew.layers[0].b[0] = 0.1;

    Vec s{0.5, 0.2, -0.9};
    double eps = 0.1;
    const uint64_t kSeed = 33;
    Rng mirror{kSeed};
    Vec s_prime(3);
    for (int i = 0; i < 3; ++i) s_prime[i] = s[i] + eps * mirror.normal();
    Rng rng{kSeed};
    Vec s_tilde = fgsm_perturb(m, s, 0, {}, eps, rng);

    double delta_r = m.reward_at(s, 0, {}) - m.reward_at(s_prime, 0, {});
    Vec w{0.7, -1.3, 0.4};
    for (int i = 0; i < 3; ++i) {
        double analytic = -2.0 * delta_r * w[i];
        double expected = s_prime[i] + eps * (analytic > 0 ? 1.0 : (analytic < 0 ? -1.0 : 0.0));
        REQUIRE(s_tilde[i] == Catch::Approx(expected).margin(1e-12));
    }
    // max-norm displacement from s' is exactly eps when no coordinate is flat
    double inf_norm = 0.0;
    for (int i = 0; i < 3; ++i) inf_norm = std::max(inf_norm, std::abs(s_tilde[i] - s_prime[i]));
    REQUIRE(inf_norm == Catch::Approx(eps).margin(1e-15));
}

TEST_CASE("loss_smt: constant reward net gives 0", "[world_model]") {
    WorldModel m = tiny_model(2, 1, 0, 81);
    for (auto& l : m.rew.layers) {
        l.w.zero();
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    m.rew.layers.back().b[0] = 3.14;
    Segment seg;
    seg.gamma = 0.9;
    for (int t = 0; t < 4; ++t)
        seg.records.push_back({{0.1 * t, 0.0}, {0, {}}, 0.0, {0.1 * (t + 1), 0.0}, false, false});
    REQUIRE(loss_smt(m, seg, 0.2, Rng(3)) == Catch::Approx(0.0).margin(1e-18));
}

TEST_CASE("loss_smt: gating follows the running max", "[world_model]") {
    // scalar linear reward R = s: predicted rewards along the segment are the
    // state values themselves
    WorldModelConfig mc;
    mc.state_dim = 1;
    mc.K = 1;
    mc.z_dim = 0;
    mc.hidden = {};
    Rng init(91);
    WorldModel m(mc, init);
    m.rew.layers[0].w.zero();
    m.rew.layers[0].w(0, 0) = 1.0;
    m.rew.layers[0].b[0] = 0.0;

    auto run_trace = [&](const std::vector<double>& rewards, double eps, uint64_t seed) {
        std::vector<double> states = rewards;
        states.push_back(rewards.back());
        Segment seg = make_segment(states, Vec(rewards.size(), 0.0), Vec(rewards.size(), 0.0), 0.9);
        double loss = loss_smt(m, seg, eps, Rng(seed));
        // mirror: fgsm draws happen only for qualifying steps, in order
        Rng mirror(seed);
        double expected = 0.0;
        double max_r = -100.0;
        for (size_t t = 0; t < rewards.size(); ++t) {
            double r_hat = m.reward_at(seg.records[t].s, 0, {});
            if (r_hat > max_r) {
                Vec s_tilde = fgsm_perturb(m, seg.records[t].s, 0, {}, eps, mirror);
                double gap = m.reward_at(seg.records[t].s, 0, {}) - m.reward_at(s_tilde, 0, {});
                expected += gap * gap;
            }
            max_r = std::max(max_r, r_hat);
        }
        return std::pair{loss, expected};
    };

    // [1, 0.5, 2]: exactly steps 1 and 3 contribute
    auto [l1, e1] = run_trace({1.0, 0.5, 2.0}, 0.3, 7);
    REQUIRE(l1 == Catch::Approx(e1).margin(1e-12));
    REQUIRE(l1 > 0.0);
    // count contributions: step 2 must not contribute
    Rng mirror(7);
    Vec st1 = fgsm_perturb(m, Vec{1.0}, 0, {}, 0.3, mirror);
    double g1 = 1.0 - m.reward_at(st1, 0, {});
    Vec st3 = fgsm_perturb(m, Vec{2.0}, 0, {}, 0.3, mirror);
    double g3 = 2.0 - m.reward_at(st3, 0, {});
    REQUIRE(l1 == Catch::Approx(g1 * g1 + g3 * g3).margin(1e-12));

    // monotonically increasing rewards: every step contributes
    auto [l2, e2] = run_trace({0.1, 0.5, 1.0, 1.5}, 0.2, 9);
    REQUIRE(l2 == Catch::Approx(e2).margin(1e-12));
    Rng mirror2(9);
    double all = 0.0;
    for (double r : {0.1, 0.5, 1.0, 1.5}) {
        Vec st = fgsm_perturb(m, Vec{r}, 0, {}, 0.2, mirror2);
        double g = r - m.reward_at(st, 0, {});
        all += g * g;
    }
    REQUIRE(l2 == Catch::Approx(all).margin(1e-12));
}

TEST_CASE("loss_total_rew: the smoothing gate is strict at the boundary", "[world_model]") {
    WorldModel m = tiny_model(1, 1, 0, 95);
    Segment seg;
    seg.gamma = 0.9;
    seg.records.push_back({{0.5}, {0, {}}, 1.0, {0.6}, false, false});
    long T = 100;
    Tape t1;
    RewLossParts at_T = build_loss_total_rew(t1, m, {seg}, 0.5, 0.1, T, T, Rng(1));
    REQUIRE_FALSE(at_T.smoothing_active);
    REQUIRE(at_T.smt == 0.0);
    Tape t2;
    RewLossParts after_T = build_loss_total_rew(t2, m, {seg}, 0.5, 0.1, T + 1, T, Rng(1));
    REQUIRE(after_T.smoothing_active);
}

TEST_CASE("loss_total_rew: perfect reward model before the threshold gives 0", "[world_model]") {
    // reward = 2 s + 1 realized exactly by a single linear layer
    WorldModelConfig mc;
    mc.state_dim = 1;
    mc.K = 1;
    mc.z_dim = 0;
    mc.hidden = {};
    Rng init(97);
    WorldModel m(mc, init);
    m.rew.layers[0].w.zero();
    m.rew.layers[0].w(0, 0) = 2.0;
    m.rew.layers[0].b[0] = 1.0;
    Segment seg;
    seg.gamma = 0.9;
    for (int t = 0; t < 3; ++t) {
        double s = 0.3 * t;
        seg.records.push_back({{s}, {0, {}}, 2.0 * s + 1.0, {0.3 * (t + 1)}, false, false});
    }
    REQUIRE(loss_total_rew(m, {seg}, 0.5, 0.1, 5, 100, Rng(2)) ==
            Catch::Approx(0.0).margin(1e-18));
}

TEST_CASE("gradient suite: every model loss matches finite differences",
          "[world_model][acceptance6]") {
    Rng rng(7);
    std::vector<Segment> batch;
    for (int b = 0; b < 2; ++b) {
        Segment seg;
        seg.gamma = 0.9;
        Vec s{rng.normal(), rng.normal()};
        for (int t = 0; t < 3; ++t) {
            Vec s2{rng.normal(), rng.normal()};
            seg.records.push_back(
                {s, {rng.uniform_int(2), {rng.uniform(-1.0, 1.0)}}, rng.normal(), s2, false, false});
            s = s2;
        }
        batch.push_back(seg);
    }

    SECTION("loss_org_dyn w.r.t. phi") {
        WorldModel m = tiny_model(2, 2, 1, 101, {6});
        auto value = [&] {
            Tape t;
            return t.scalar(build_loss_org_dyn(t, m, batch));
        };
        auto compute = [&] {
            Tape t;
            t.backward(build_loss_org_dyn(t, m, batch));
        };
        REQUIRE(testutil::check_param_gradients(m.dyn, value, compute));
    }

    SECTION("loss_ex w.r.t. phi") {
        WorldModel m = tiny_model(2, 2, 1, 103, {6});
        const uint64_t kSeed = 5;
        auto value = [&] {
            Tape t;
            return t.scalar(build_loss_ex(t, m, batch, 2, Rng(kSeed), true));
        };
        auto compute = [&] {
            Tape t;
            t.backward(build_loss_ex(t, m, batch, 2, Rng(kSeed), true));
        };
        REQUIRE(testutil::check_param_gradients(m.dyn, value, compute));
    }

    SECTION("loss_ex w.r.t. the critic") {
        WorldModel m = tiny_model(2, 2, 1, 107, {6});
        const uint64_t kSeed = 6;
        auto value = [&] {
            Tape t;
            return t.scalar(build_loss_ex(t, m, batch, 2, Rng(kSeed), false));
        };
        auto compute = [&] {
            Tape t;
            t.backward(build_loss_ex(t, m, batch, 2, Rng(kSeed), false));
        };
        REQUIRE(testutil::check_param_gradients(m.critic, value, compute));
    }

    SECTION("loss_smt w.r.t. psi") {
        WorldModel m = tiny_model(2, 2, 1, 109, {6});
        const uint64_t kSeed = 8;
        auto value = [&] {
            Tape t;
            Rng r(kSeed);
            return t.scalar(build_loss_smt(t, m, batch[0], 0.1, r));
        };
        auto compute = [&] {
            Tape t;
            Rng r(kSeed);
            t.backward(build_loss_smt(t, m, batch[0], 0.1, r));
        };
        REQUIRE(testutil::check_param_gradients(m.rew, value, compute));
    }

    SECTION("loss_org_rew w.r.t. psi") {
        WorldModel m = tiny_model(2, 2, 1, 113, {6});
        auto value = [&] {
            Tape t;
            return t.scalar(build_loss_org_rew(t, m, batch));
        };
        auto compute = [&] {
            Tape t;
            t.backward(build_loss_org_rew(t, m, batch));
        };
        REQUIRE(testutil::check_param_gradients(m.rew, value, compute));
    }
}
