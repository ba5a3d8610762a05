#include <catch2/catch_amalgamated.hpp>

#include "flexplore/diag/checks.hpp"
#include "flexplore/diag/dist1d.hpp"

using namespace flexplore;

namespace {

EmpiricalDist1D random_weighted(Rng& rng, int max_support = 8) {
    int n = 1 + rng.uniform_int(max_support);
    std::vector<double> pts(n), ws(n);
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
        pts[j] = rng.uniform(-5.0, 5.0);
        ws[j] = rng.uniform(0.05, 1.0);
        s += ws[j];
    }
    for (auto& w : ws) w /= s;
    return EmpiricalDist1D::weighted(pts, ws);
}

}  // namespace

TEST_CASE("wasserstein_1d: identical distributions give 0", "[diag]") {
    auto p = EmpiricalDist1D::samples({0.1, 0.5, 2.0});
    REQUIRE(wasserstein_1d(p, p) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("wasserstein_1d: disjoint uniform blocks (closed form)", "[diag]") {
    // uniform on [2,3] vs uniform on [0,1]: distance |2+3-0-1|/2 = 2
    Rng rng(3);
    std::vector<double> a, b;
    for (int i = 0; i < 20000; ++i) {
        a.push_back(rng.uniform(2.0, 3.0));
        b.push_back(rng.uniform(0.0, 1.0));
    }
    double w = wasserstein_1d(EmpiricalDist1D::samples(a), EmpiricalDist1D::samples(b));
    REQUIRE(w == Catch::Approx(2.0).margin(0.02));
}

TEST_CASE("wasserstein_1d matches the LP transport oracle", "[diag]") {
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        EmpiricalDist1D p = random_weighted(rng);
        EmpiricalDist1D q = random_weighted(rng);
        double fast = wasserstein_1d(p, q);
        double oracle = transport_lp_oracle(p, q);
        REQUIRE(fast == Catch::Approx(oracle).margin(1e-9));
    }
}

TEST_CASE("wasserstein_1d is a metric on small supports", "[diag]") {
    Rng rng(29);
    for (int i = 0; i < 100; ++i) {
        EmpiricalDist1D p = random_weighted(rng);
        EmpiricalDist1D q = random_weighted(rng);
        EmpiricalDist1D r = random_weighted(rng);
        double pq = wasserstein_1d(p, q);
        double qp = wasserstein_1d(q, p);
        REQUIRE(pq == Catch::Approx(qp).margin(1e-12));  // symmetry
        REQUIRE(wasserstein_1d(p, p) <= 1e-9);           // identity
        double pr = wasserstein_1d(p, r);
        double qr = wasserstein_1d(q, r);
        REQUIRE(pq <= pr + qr + 1e-9);  // triangle
        // trivial upper bound: range of the union support
        double lo = 1e300, hi = -1e300;
        for (double x : p.points) { lo = std::min(lo, x); hi = std::max(hi, x); }
        for (double x : q.points) { lo = std::min(lo, x); hi = std::max(hi, x); }
        REQUIRE(pq <= (hi - lo) + 1e-12);
    }
}

TEST_CASE("transport oracle refuses large supports", "[diag]") {
    std::vector<double> pts(9), ws(9, 1.0 / 9.0);
    for (int i = 0; i < 9; ++i) pts[i] = i;
    auto big = EmpiricalDist1D::weighted(pts, ws);
    auto small = EmpiricalDist1D::samples({0.0});
    REQUIRE_THROWS_AS(transport_lp_oracle(big, small), std::invalid_argument);
}

TEST_CASE("kl/tv on disjoint histograms", "[diag]") {
    KlTvResult r = kl_tv_disjoint_demo({0.5, 0.5, 0.0, 0.0}, {0.0, 0.0, 0.5, 0.5});
    REQUIRE(r.kl_infinite);
    REQUIRE(std::isinf(r.kl));
    REQUIRE(r.tv == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("kl/tv on identical histograms", "[diag]") {
    KlTvResult r = kl_tv_disjoint_demo({0.25, 0.75}, {0.25, 0.75});
    REQUIRE_FALSE(r.kl_infinite);
    REQUIRE(r.kl == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(r.tv == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("kl/tv on half-overlapping histograms", "[diag]") {
    KlTvResult r = kl_tv_disjoint_demo({0.5, 0.5, 0.0, 0.0}, {0.0, 0.5, 0.5, 0.0});
    REQUIRE(r.kl_infinite);
    REQUIRE(r.tv == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("estimate_lipschitz on known functions", "[diag]") {
    Rng rng(31);
    auto sampler = [](Rng& r) { return Vec{r.uniform(-3.0, 3.0)}; };
    double lin = estimate_lipschitz([](const Vec& x) { return Vec{3.0 * x[0]}; }, sampler, 2000, rng);
    REQUIRE(lin == Catch::Approx(3.0).margin(1e-9));

    double s = estimate_lipschitz([](const Vec& x) { return Vec{std::sin(x[0])}; }, sampler,
                                  20000, rng);
    REQUIRE(s <= 1.0 + 1e-12);
    REQUIRE(s >= 0.95);
}

TEST_CASE("estimate_lipschitz never exceeds the MLP analytic bound", "[diag]") {
    Rng rng(37);
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        MlpSpec spec{3, {8, 8}, 2, Activation::LeakyReLU};
        Rng init(seed);
        ParamBlock pb = init_params(spec, "f", init);
        auto sampler = [](Rng& r) {
            Vec x(3);
            for (auto& v : x) v = r.uniform(-2.0, 2.0);
            return x;
        };
        double est = estimate_lipschitz(
            [&](const Vec& x) { return mlp_forward(spec, pb, x); }, sampler, 3000, rng);
        double bound = mlp_lipschitz_upper_bound(spec, pb);
        REQUIRE(est <= bound + 1e-9);
    }
}

TEST_CASE("sandwich: exact model gives zero distances and tight bounds", "[diag][sandwich]") {
    SandwichConfig cfg;
    cfg.shift = 0.0;
    cfg.drift = 0.15;
    cfg.sigma = 0.4;
    cfg.H = 3;
    cfg.seed = 5;
    SandwichReport rep = check_bound_sandwich(cfg);
    REQUIRE(rep.w_max == 0.0);
    REQUIRE(rep.w_discounted_sum == 0.0);
    // critic cannot manufacture signal beyond MC noise
    REQUIRE(rep.loss_ex <= 3.0 * rep.se + 0.05);
    REQUIRE(rep.upper_ok);
    REQUIRE(rep.lower_ok);
}

TEST_CASE("sandwich: shifted-mean model satisfies both bounds", "[diag][sandwich]") {
    SandwichConfig cfg;
    cfg.shift = 0.5;
    cfg.drift = 0.1;
    cfg.sigma = 0.5;
    cfg.H = 3;
    cfg.gamma = 0.9;
    cfg.seed = 7;
    SandwichReport rep = check_bound_sandwich(cfg);
    INFO("loss_ex=" << rep.loss_ex << " se=" << rep.se << " critic_lip=" << rep.critic_lipschitz);
    REQUIRE_FALSE(rep.inconclusive);
    REQUIRE(rep.loss_ex >= 0.95 * 0.5 - 3.0 * rep.se);
    REQUIRE(rep.loss_ex <= (1.0 + 0.9 + 0.81) * 0.5 + 3.0 * rep.se);
    REQUIRE(rep.cor31_ok);
    REQUIRE(rep.cor32_ok);
}
