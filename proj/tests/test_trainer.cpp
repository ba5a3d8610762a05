#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "flexplore/diag/checks.hpp"
#include "flexplore/train/trainer.hpp"

using namespace flexplore;
namespace fs = std::filesystem;

namespace {

Transition make_tr(double s, double s2, double r, bool done, int k = 0) {
    return {{s}, {k, {}}, r, {s2}, done, false};
}

// one fake episode of the given length, chained scalar states
void push_episode(ReplayBuffer& buf, int len, double base, bool done_at_end = true) {
    for (int t = 0; t < len; ++t)
        buf.push(make_tr(base + t, base + t + 1, 0.1 * t, done_at_end && t == len - 1));
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double chi2_99_quantile(int dof) {
    // Wilson-Hilferty approximation of the 0.99 quantile
    double k = dof;
    double c = 1.0 - 2.0 / (9.0 * k) + 2.3263478740408408 * std::sqrt(2.0 / (9.0 * k));
    return k * c * c * c;
}

TrainConfig quick_config(const std::string& env_id, long steps, uint64_t seed) {
    TrainConfig cfg;
    cfg.env_id = env_id;
    if (auto d = env_defaults(env_id)) {
        cfg.lambda = d->lambda;
        cfg.mu = d->mu;
        cfg.eta = d->eta;
        cfg.eps = d->eps;
        cfg.T = d->T;
        cfg.H = d->H;
    }
    cfg.total_env_steps = steps;
    cfg.seed = seed;
    cfg.planner_N = 8;
    cfg.n_elite = 2;
    cfg.plan_iters = 2;
    cfg.batch_size = 8;
    cfg.hidden = {16};
    cfg.warmup_steps = 50;
    cfg.eval_episodes = 0;
    cfg.critic_steps = 2;
    cfg.n_model_samples = 2;
    return cfg;
}

}  // namespace

TEST_CASE("replay buffer: capacity evicts the oldest transitions", "[trainer]") {
    ReplayBuffer buf(10);
    push_episode(buf, 6, 0.0);
    push_episode(buf, 6, 100.0);
    REQUIRE(buf.size() == 10);
    REQUIRE(buf.num_episodes() == 2);
    // the first two transitions of episode 1 are gone
    push_episode(buf, 4, 200.0);
    REQUIRE(buf.size() == 10);
}

TEST_CASE("replay conservation: stored transitions equal env steps until eviction", "[trainer]") {
    ReplayBuffer buf(1000);
    push_episode(buf, 12, 0.0);
    push_episode(buf, 7, 50.0);
    REQUIRE(buf.size() == 19);
}

TEST_CASE("sample_segments: a single length-H episode yields the one possible window",
          "[trainer]") {
    ReplayBuffer buf(100);
    push_episode(buf, 5, 0.0);
    Rng rng(1);
    auto batch = sample_segments(buf, 5, 20, 0.9, rng);
    REQUIRE(batch.size() == 20);
    for (const auto& seg : batch) {
        REQUIRE(seg.length() == 5);
        REQUIRE(seg.records.front().s[0] == 0.0);
        for (const auto& rec : seg.records) REQUIRE_FALSE(rec.padded);
    }
}

TEST_CASE("sample_segments: empty buffer signals warmup", "[trainer]") {
    ReplayBuffer buf(100);
    Rng rng(1);
    REQUIRE(sample_segments(buf, 5, 4, 0.9, rng).empty());
    // an in-progress short episode is not enough either
    push_episode(buf, 3, 0.0, false);
    buf.end_episode();
    REQUIRE(sample_segments(buf, 5, 4, 0.9, rng).empty());
}

TEST_CASE("sample_segments: short completed episodes are terminal-padded", "[trainer]") {
    ReplayBuffer buf(100);
    push_episode(buf, 3, 0.0);  // done at the end, shorter than H = 5
    Rng rng(2);
    auto batch = sample_segments(buf, 5, 4, 0.9, rng);
    REQUIRE(batch.size() == 4);
    for (const auto& seg : batch) {
        REQUIRE(seg.length() == 5);
        REQUIRE_FALSE(seg.records[2].padded);
        REQUIRE(seg.records[3].padded);
        REQUIRE(seg.records[4].padded);
        // padding repeats the terminal state with reward 0 and a done mask
        REQUIRE(seg.records[3].s == seg.records[2].s_next);
        REQUIRE(seg.records[3].s_next == seg.records[2].s_next);
        REQUIRE(seg.records[3].r == 0.0);
        REQUIRE(seg.records[3].done);
        seg.validate();
    }
}

TEST_CASE("sample_segments: windows never span a done flag", "[trainer]") {
    ReplayBuffer buf(1000);
    push_episode(buf, 9, 0.0);
    push_episode(buf, 11, 100.0);
    Rng rng(3);
    for (const auto& seg : sample_segments(buf, 4, 200, 0.9, rng)) {
        for (int t = 0; t + 1 < seg.length(); ++t) REQUIRE_FALSE(seg.records[t].done);
        // all states belong to one episode's value range
        bool first = seg.records[0].s[0] < 50.0;
        for (const auto& rec : seg.records)
            REQUIRE((rec.s[0] < 50.0) == first);
    }
}

TEST_CASE("sample_segments: window starts are uniform (chi-squared)", "[trainer]") {
    ReplayBuffer buf(1000);
    push_episode(buf, 12, 0.0);
    push_episode(buf, 9, 100.0);
    const int H = 5;
    // starts: 8 in episode one, 5 in episode two
    const int k = 13;
    std::map<double, int> counts;
    Rng rng(4);
    const int n = 10000;
    auto batch = sample_segments(buf, H, n, 0.9, rng);
    for (const auto& seg : batch) counts[seg.records[0].s[0]] += 1;
    REQUIRE(counts.size() == k);
    double expected = static_cast<double>(n) / k;
    double chi2 = 0.0;
    for (const auto& [start, c] : counts)
        chi2 += (c - expected) * (c - expected) / expected;
    REQUIRE(chi2 < chi2_99_quantile(k - 1));
}

TEST_CASE("inject_adversarial: ratio 0 leaves the buffer untouched", "[trainer]") {
    ReplayBuffer buf(100);
    push_episode(buf, 8, 0.0);
    std::vector<double> before;
    buf.for_each_transition([&](const Transition& tr) { before.push_back(tr.s[0]); });
    WorldModelConfig mc;
    mc.state_dim = 1;
    mc.K = 1;
    mc.z_dim = 0;
    mc.hidden = {4};
    Rng mr(5);
    WorldModel m(mc, mr);
    Rng rng(6);
    InjectStats st = inject_adversarial(buf, m, 0.0, 0.2, rng);
    REQUIRE(st.selected == 0);
    std::vector<double> after;
    buf.for_each_transition([&](const Transition& tr) { after.push_back(tr.s[0]); });
    REQUIRE(after == before);
}

TEST_CASE("inject_adversarial: perturbs round(ratio * |B|) transitions at the exact strength",
          "[trainer]") {
    ReplayBuffer buf(1000);
    Rng gen(7);
    // richer transitions with a continuous parameter
    for (int ep = 0; ep < 10; ++ep)
        for (int t = 0; t < 10; ++t)
            buf.push({{gen.normal(), gen.normal()},
                      {0, {gen.normal()}},
                      gen.normal(),
                      {gen.normal(), gen.normal()},
                      t == 9,
                      false});
    WorldModelConfig mc;
    mc.state_dim = 2;
    mc.K = 1;
    mc.z_dim = 1;
    mc.hidden = {6};
    Rng mr(8);
    WorldModel m(mc, mr);

    std::vector<std::pair<Vec, Vec>> before;  // (s, z)
    buf.for_each_transition([&](const Transition& tr) { before.push_back({tr.s, tr.a.z}); });

    Rng rng(9);
    const double strength = 0.15;
    InjectStats st = inject_adversarial(buf, m, 0.1, strength, rng);
    REQUIRE(st.perturbed == 10);  // round(0.1 * 100)
    REQUIRE(count_perturbed(buf) == 10);

    size_t idx = 0;
    buf.for_each_transition([&](const Transition& tr) {
        const auto& [s0, z0] = before[idx];
        if (tr.perturbed) {
            Vec orig = concat(s0, z0);
            Vec now = concat(tr.s, tr.a.z);
            Vec delta(orig.size());
            for (size_t j = 0; j < orig.size(); ++j) delta[j] = now[j] - orig[j];
            REQUIRE(norm2(delta) / norm2(orig) == Catch::Approx(strength).margin(1e-6));
        } else {
            REQUIRE(tr.s == s0);
            REQUIRE(tr.a.z == z0);
        }
        ++idx;
    });
}

TEST_CASE("inject_adversarial: zero-norm originals are skipped", "[trainer]") {
    ReplayBuffer buf(10);
    buf.push({{0.0}, {0, {}}, 0.0, {0.0}, true, false});
    WorldModelConfig mc;
    mc.state_dim = 1;
    mc.K = 1;
    mc.z_dim = 0;
    mc.hidden = {4};
    Rng mr(10);
    WorldModel m(mc, mr);
    Rng rng(11);
    InjectStats st = inject_adversarial(buf, m, 1.0, 0.5, rng);
    REQUIRE(st.skipped_zero_norm == 1);
    REQUIRE(count_perturbed(buf) == 0);
}

TEST_CASE("model_update skips on non-finite loss and leaves parameters alone", "[trainer]") {
    WorldModelConfig mc;
    mc.state_dim = 1;
    mc.K = 1;
    mc.z_dim = 0;
    mc.hidden = {4};
    Rng mr(12);
    WorldModel m(mc, mr);
    m.dyn.layers[0].w(0, 0) = 1e200;  // force an overflow in the squared error
    ParamBlock before = m.dyn;
    Segment seg;
    seg.gamma = 0.9;
    seg.records.push_back({{1.0}, {0, {}}, 0.0, {1.1}, false, false});
    TrainConfig cfg = quick_config("platform", 0, 1);
    cfg.lambda = 0.0;
    Rng rng(13);
    ModelUpdateResult r = model_update(m, {seg}, cfg, 1, rng);
    REQUIRE(r.skipped);
    REQUIRE(m.dyn.layers[0].w.a == before.layers[0].w.a);
}

TEST_CASE("train: zero env steps emit empty metrics and an initial checkpoint", "[trainer]") {
    fs::path dir = fs::temp_directory_path() / "flexplore_t0";
    fs::remove_all(dir);
    TrainConfig cfg = quick_config("catch_point", 0, 3);
    TrainResult res = train(cfg, dir.string());
    std::string metrics = slurp(res.metrics_path);
    REQUIRE(metrics == std::string(kMetricsHeader) + "\n");
    REQUIRE(fs::exists(res.checkpoint_path));
    auto blocks = load_checkpoint(res.checkpoint_path);
    REQUIRE(blocks.count("dyn") == 1);
    REQUIRE(blocks.count("pi_beta") == 1);
    fs::remove_all(dir);
}

TEST_CASE("train: identical seed and config give bitwise-identical artifacts", "[trainer]") {
    fs::path dir1 = fs::temp_directory_path() / "flexplore_det1";
    fs::path dir2 = fs::temp_directory_path() / "flexplore_det2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    TrainConfig cfg = quick_config("catch_point", 250, 7);
    cfg.metrics_every = 50;
    TrainResult a = train(cfg, dir1.string());
    TrainResult b = train(cfg, dir2.string());
    REQUIRE(slurp(a.metrics_path) == slurp(b.metrics_path));
    REQUIRE(slurp(a.checkpoint_path) == slurp(b.checkpoint_path));
    REQUIRE(slurp(a.metrics_path).size() > 100);
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("train: smoothing gate appears in the metrics at T", "[trainer]") {
    fs::path dir = fs::temp_directory_path() / "flexplore_gate";
    fs::remove_all(dir);
    TrainConfig cfg = quick_config("catch_point", 200, 5);
    cfg.T = 100;
    cfg.metrics_every = 50;
    train(cfg, dir.string());
    std::ifstream in(dir / "metrics.csv");
    std::string line;
    std::getline(in, line);  // header
    std::map<long, int> gate;
    while (std::getline(in, line)) {
        auto first_comma = line.find(',');
        long step = std::stol(line.substr(0, first_comma));
        int active = line.back() - '0';
        gate[step] = active;
    }
    REQUIRE(gate.at(50) == 0);
    REQUIRE(gate.at(100) == 0);  // boundary: timestep <= T keeps the gate closed
    REQUIRE(gate.at(150) == 1);
    REQUIRE(gate.at(200) == 1);
    fs::remove_all(dir);
}

TEST_CASE("train: ablation flags force the gate", "[trainer]") {
    for (bool always : {false, true}) {
        fs::path dir = fs::temp_directory_path() / "flexplore_abl";
        fs::remove_all(dir);
        TrainConfig cfg = quick_config("catch_point", 120, 5);
        cfg.T = 60;
        cfg.metrics_every = 40;
        cfg.ablation.no_smoothing = !always;
        cfg.ablation.always_smoothing = always;
        train(cfg, dir.string());
        std::ifstream in(dir / "metrics.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            int active = line.back() - '0';
            REQUIRE(active == (always ? 1 : 0));
        }
        fs::remove_all(dir);
    }
}

TEST_CASE("gating monotonicity: raising T never increases active iterations", "[trainer]") {
    auto active_count = [](long T, long steps) {
        long n = 0;
        for (long t = 1; t <= steps; ++t)
            if (t > T) ++n;
        return n;
    };
    for (long steps : {100L, 1000L}) {
        long prev = std::numeric_limits<long>::max();
        for (long T : {0L, 10L, 50L, 100L, 2000L}) {
            long n = active_count(T, steps);
            REQUIRE(n <= prev);
            prev = n;
        }
    }
}

TEST_CASE("checkpoint round-trip: one further identical update matches the uninterrupted run",
          "[trainer]") {
    fs::path dir = fs::temp_directory_path() / "flexplore_ckpt_rt";
    fs::remove_all(dir);
    TrainConfig cfg = quick_config("catch_point", 150, 11);
    TrainResult res = train(cfg, dir.string());

    // reload the trained blocks
    auto blocks = load_checkpoint(res.checkpoint_path);
    WorldModel twin = res.model;  // same specs/config
    twin.dyn = blocks["dyn"];
    twin.rew = blocks["rew"];
    twin.critic = blocks["critic"];

    // identical batch + rng on both copies
    auto env = make_env(cfg.env_id);
    Rng gen(99);
    std::vector<Segment> batch;
    for (int b = 0; b < 4; ++b) {
        Segment seg;
        seg.gamma = cfg.gamma;
        Vec s = env->reset(gen.next_u64());
        for (int t = 0; t < cfg.H; ++t) {
            HybridAction a = random_action(env->spec(), gen);
            StepResult sr = env->step(s, a);
            seg.records.push_back({s, a, sr.reward, sr.next_state, sr.done, false});
            s = sr.next_state;
            if (sr.done) s = env->reset(gen.next_u64());
        }
        // keep the window inside one episode
        bool crossed = false;
        for (int t = 0; t + 1 < seg.length(); ++t) crossed |= seg.records[t].done;
        if (crossed) {
            --b;
            continue;
        }
        batch.push_back(seg);
    }

    WorldModel a = res.model;
    Rng ra(123), rb(123);
    model_update(a, batch, cfg, cfg.total_env_steps + 1, ra);
    model_update(twin, batch, cfg, cfg.total_env_steps + 1, rb);
    for (size_t li = 0; li < a.dyn.layers.size(); ++li) {
        REQUIRE(a.dyn.layers[li].w.a == twin.dyn.layers[li].w.a);
        REQUIRE(a.dyn.layers[li].b == twin.dyn.layers[li].b);
    }
    for (size_t li = 0; li < a.rew.layers.size(); ++li)
        REQUIRE(a.rew.layers[li].w.a == twin.rew.layers[li].w.a);
    fs::remove_all(dir);
}

TEST_CASE("config: defaults come from the per-env table with an info trail", "[trainer]") {
    std::istringstream in("env = catch_point\nseed = 5\n");
    LoadedConfig lc = load_config_text(in);
    REQUIRE(lc.cfg.lambda == 0.4);
    REQUIRE(lc.cfg.mu == 0.5);
    REQUIRE(lc.cfg.eta == 0.01);
    REQUIRE(lc.cfg.eps == 0.1);
    REQUIRE(lc.cfg.T == 10000);
    REQUIRE(lc.cfg.H == 5);
    REQUIRE(std::find(lc.defaulted.begin(), lc.defaulted.end(), "lambda") != lc.defaulted.end());

    std::istringstream in2("env = hard_move:8\nlambda = 0.9\n");
    LoadedConfig lc2 = load_config_text(in2);
    REQUIRE(lc2.cfg.lambda == 0.9);  // explicit wins
    REQUIRE(lc2.cfg.eps == 0.5);
    REQUIRE(lc2.cfg.T == 100000);
}

TEST_CASE("config: field-level errors", "[trainer]") {
    std::istringstream bad1("env = platform\ngamma = 1.5\n");
    REQUIRE_THROWS_AS(load_config_text(bad1), ConfigError);
    std::istringstream bad2("env = platform\nbanana = 3\n");
    REQUIRE_THROWS_AS(load_config_text(bad2), ConfigError);
    std::istringstream bad3("env = platform\nlambda = abc\n");
    try {
        load_config_text(bad3);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.field_name == "lambda");
    }
}

TEST_CASE("config: ablation flags parse and reduce", "[trainer]") {
    std::istringstream in("env = platform\nablation = no_mi, no_flex_loss\n");
    LoadedConfig lc = load_config_text(in);
    REQUIRE(lc.cfg.ablation.no_mi);
    REQUIRE(lc.cfg.ablation.no_flex_loss);
    REQUIRE(lc.cfg.effective_eta() == 0.0);
    REQUIRE(lc.cfg.effective_lambda() == 0.0);
    REQUIRE_FALSE(lc.cfg.ablation.no_smoothing);

    // round trip through the snapshot format
    std::istringstream snap(config_to_text(lc.cfg));
    LoadedConfig lc2 = load_config_text(snap);
    REQUIRE(lc2.cfg.ablation.no_mi);
    REQUIRE(lc2.cfg.lambda == lc.cfg.lambda);
}

TEST_CASE("adversarial strength zero equals a clean run", "[trainer]") {
    fs::path d1 = fs::temp_directory_path() / "flexplore_adv0";
    fs::path d2 = fs::temp_directory_path() / "flexplore_clean";
    fs::remove_all(d1);
    fs::remove_all(d2);
    TrainConfig clean = quick_config("catch_point", 200, 21);
    clean.metrics_every = 50;
    TrainConfig adv = clean;
    adv.inject.ratio = 0.1;
    adv.inject.strength = 0.0;
    adv.inject.interval = 60;
    TrainResult ra = train(adv, d1.string());
    TrainResult rc = train(clean, d2.string());
    REQUIRE(slurp(ra.metrics_path) == slurp(rc.metrics_path));
    REQUIRE(slurp(ra.checkpoint_path) == slurp(rc.checkpoint_path));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("dynamics_consistency_error: perfect and identity models", "[trainer]") {
    // identity model on an env with fixed displacement d has error ||d||
    WorldModelConfig mc;
    mc.state_dim = 2;
    mc.K = 1;
    mc.z_dim = 0;
    mc.hidden = {};
    Rng mr(31);
    WorldModel m(mc, mr);
    for (auto& l : m.dyn.layers) {
        l.w.zero();
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    ReplayBuffer buf(100);
    const Vec d{0.3, -0.4};  // ||d|| = 0.5
    for (int t = 0; t < 10; ++t)
        buf.push({{0.1 * t, 0.2 * t}, {0, {}}, 0.0,
                  {0.1 * t + d[0], 0.2 * t + d[1]}, t == 9, false});
    REQUIRE(dynamics_consistency_error(m, buf) == Catch::Approx(0.5).margin(1e-12));

    // exact model: error 0
    m.dyn.layers[0].b[0] = d[0];
    m.dyn.layers[0].b[1] = d[1];
    REQUIRE(dynamics_consistency_error(m, buf) == Catch::Approx(0.0).margin(1e-12));
}
