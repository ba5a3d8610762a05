#pragma once

#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flexplore/core/nn.hpp"

namespace flexplore {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error("config field '" + field + "': " + what), field_name(field) {}
    std::string field_name;
};

struct AblationFlags {
    bool no_smoothing = false;
    bool always_smoothing = false;
    bool no_mi = false;
    bool no_flex_loss = false;

    bool any() const { return no_smoothing || always_smoothing || no_mi || no_flex_loss; }
};

struct AdversarialInjection {
    double ratio = 0.0;
    double strength = 0.0;
    long interval = 1000;  // env steps between injections

    bool active() const { return ratio > 0.0; }
};

// One key per field in the flat key=value config file; unset keys fall back
// to the per-environment defaults below.
struct TrainConfig {
    std::string env_id = "platform";
    int H = 8;
    double gamma = 0.99;
    double lambda = 0.7;  // exploration-loss weight
    double mu = 0.5;      // smoothing weight
    double eta = 0.01;    // MI reward weight
    double eps = 0.1;     // FGSM radius
    long T = 10000;       // smoothing threshold (env steps)
    long total_env_steps = 20000;
    int batch_size = 32;
    int model_updates_per_env_step = 1;
    uint64_t seed = 1;
    AblationFlags ablation;
    AdversarialInjection inject;

    // planner
    int planner_N = 64;
    int n_elite = 6;
    int plan_iters = 6;
    double temperature = 1.0;
    double temp_floor = 0.3;
    double temp_anneal = 0.995;

    // machinery
    int warmup_steps = 500;
    size_t capacity = 100000;
    std::vector<int> hidden = {64, 64};
    int critic_steps = 5;
    int n_model_samples = 4;
    double alpha = 1.0;
    int metrics_every = 100;
    int eval_episodes = 20;
    bool plan_trace = false;  // stream per-decision planner rounds to JSONL

    void validate() const {
        if (H < 1) throw ConfigError("H", "must be >= 1");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma", "must be in (0, 1]");
        if (lambda < 0.0) throw ConfigError("lambda", "must be >= 0");
        if (mu < 0.0) throw ConfigError("mu", "must be >= 0");
        if (eta < 0.0) throw ConfigError("eta", "must be >= 0");
        if (eps < 0.0) throw ConfigError("epsilon", "must be >= 0");
        if (T < 0) throw ConfigError("T", "must be >= 0");
        if (total_env_steps < 0) throw ConfigError("total_env_steps", "must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
        if (model_updates_per_env_step < 0)
            throw ConfigError("model_updates_per_env_step", "must be >= 0");
        if (inject.ratio < 0.0 || inject.ratio > 1.0)
            throw ConfigError("inject_ratio", "must be in [0, 1]");
        if (inject.strength < 0.0) throw ConfigError("inject_strength", "must be >= 0");
        if (planner_N < 1) throw ConfigError("planner_N", "must be >= 1");
        if (n_elite < 1 || n_elite > planner_N)
            throw ConfigError("n_elite", "must satisfy 1 <= n_elite <= planner_N");
        if (plan_iters < 1) throw ConfigError("plan_iters", "must be >= 1");
        if (temperature <= 0.0) throw ConfigError("temperature", "must be > 0");
        if (ablation.no_smoothing && ablation.always_smoothing)
            throw ConfigError("ablation", "no_smoothing and always_smoothing are exclusive");
    }

    long effective_T() const {
        if (ablation.no_smoothing) return std::numeric_limits<long>::max();
        if (ablation.always_smoothing) return -1;
        return T;
    }
    double effective_lambda() const { return ablation.no_flex_loss ? 0.0 : lambda; }
    double effective_eta() const { return ablation.no_mi ? 0.0 : eta; }
};

struct EnvDefaults {
    double lambda, mu, eta, eps;
    long T;
    int H;
};

// per-environment hyperparameter defaults
inline std::optional<EnvDefaults> env_defaults(const std::string& env_id) {
    if (env_id == "platform") return EnvDefaults{0.7, 0.5, 0.01, 0.1, 10000, 8};
    if (env_id == "catch_point") return EnvDefaults{0.4, 0.5, 0.01, 0.1, 10000, 5};
    if (env_id == "hard_move:4") return EnvDefaults{0.4, 0.5, 0.05, 0.3, 50000, 5};
    if (env_id == "hard_move:6") return EnvDefaults{0.4, 0.5, 0.05, 0.3, 100000, 5};
    if (env_id == "hard_move:8") return EnvDefaults{0.4, 0.5, 0.05, 0.5, 100000, 5};
    return std::nullopt;
}

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

template <class T>
T parse_num(const std::string& field, const std::string& v);

template <>
inline double parse_num<double>(const std::string& field, const std::string& v) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (...) {
        throw ConfigError(field, "cannot parse '" + v + "' as a number");
    }
}

template <>
inline long parse_num<long>(const std::string& field, const std::string& v) {
    try {
        size_t pos = 0;
        long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (...) {
        throw ConfigError(field, "cannot parse '" + v + "' as an integer");
    }
}

template <>
inline int parse_num<int>(const std::string& field, const std::string& v) {
    long x = parse_num<long>(field, v);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        throw ConfigError(field, "out of int range");
    return static_cast<int>(x);
}

template <>
inline uint64_t parse_num<uint64_t>(const std::string& field, const std::string& v) {
    try {
        size_t pos = 0;
        unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return static_cast<uint64_t>(x);
    } catch (...) {
        throw ConfigError(field, "cannot parse '" + v + "' as an unsigned integer");
    }
}

}  // namespace detail

// Applies key=value pairs onto a config. Returns the list of applied keys.
// Logging of defaulted fields is the caller's business.
inline void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_num;
    if (key == "env") cfg.env_id = value;
    else if (key == "H") cfg.H = parse_num<int>(key, value);
    else if (key == "gamma") cfg.gamma = parse_num<double>(key, value);
    else if (key == "lambda") cfg.lambda = parse_num<double>(key, value);
    else if (key == "mu") cfg.mu = parse_num<double>(key, value);
    else if (key == "eta") cfg.eta = parse_num<double>(key, value);
    else if (key == "epsilon") cfg.eps = parse_num<double>(key, value);
    else if (key == "T") cfg.T = parse_num<long>(key, value);
    else if (key == "total_env_steps") cfg.total_env_steps = parse_num<long>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_num<int>(key, value);
    else if (key == "model_updates_per_env_step")
        cfg.model_updates_per_env_step = parse_num<int>(key, value);
    else if (key == "seed") cfg.seed = parse_num<uint64_t>(key, value);
    else if (key == "planner_N") cfg.planner_N = parse_num<int>(key, value);
    else if (key == "n_elite") cfg.n_elite = parse_num<int>(key, value);
    else if (key == "plan_iters") cfg.plan_iters = parse_num<int>(key, value);
    else if (key == "temperature") cfg.temperature = parse_num<double>(key, value);
    else if (key == "temp_floor") cfg.temp_floor = parse_num<double>(key, value);
    else if (key == "temp_anneal") cfg.temp_anneal = parse_num<double>(key, value);
    else if (key == "warmup_steps") cfg.warmup_steps = parse_num<int>(key, value);
    else if (key == "capacity") cfg.capacity = static_cast<size_t>(parse_num<long>(key, value));
    else if (key == "critic_steps") cfg.critic_steps = parse_num<int>(key, value);
    else if (key == "n_model_samples") cfg.n_model_samples = parse_num<int>(key, value);
    else if (key == "alpha") cfg.alpha = parse_num<double>(key, value);
    else if (key == "metrics_every") cfg.metrics_every = parse_num<int>(key, value);
    else if (key == "eval_episodes") cfg.eval_episodes = parse_num<int>(key, value);
    else if (key == "plan_trace") cfg.plan_trace = (value == "1" || value == "true");
    else if (key == "inject_ratio") cfg.inject.ratio = parse_num<double>(key, value);
    else if (key == "inject_strength") cfg.inject.strength = parse_num<double>(key, value);
    else if (key == "inject_interval") cfg.inject.interval = parse_num<long>(key, value);
    else if (key == "hidden") {
        cfg.hidden.clear();
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, ','))
            cfg.hidden.push_back(parse_num<int>(key, detail::trim(part)));
        if (cfg.hidden.empty()) throw ConfigError(key, "needs at least one layer width");
    } else if (key == "ablation") {
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, ',')) {
            part = detail::trim(part);
            if (part.empty()) continue;
            if (part == "no_smoothing") cfg.ablation.no_smoothing = true;
            else if (part == "always_smoothing") cfg.ablation.always_smoothing = true;
            else if (part == "no_mi") cfg.ablation.no_mi = true;
            else if (part == "no_flex_loss") cfg.ablation.no_flex_loss = true;
            else throw ConfigError(key, "unknown ablation flag '" + part + "'");
        }
    } else {
        throw ConfigError(key, "unknown key");
    }
}

struct LoadedConfig {
    TrainConfig cfg;
    std::vector<std::string> defaulted;  // per-env fields filled from the table
};

// Parses a flat key=value file ('#' starts a comment) and fills unset
// per-env hyperparameters from the defaults table.
inline LoadedConfig load_config_text(std::istream& in) {
    LoadedConfig out;
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno), "expected key=value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
        kv[key] = value;
    }

    if (kv.count("env")) apply_config_entry(out.cfg, "env", kv["env"]);
    if (auto d = env_defaults(out.cfg.env_id)) {
        if (!kv.count("lambda")) { out.cfg.lambda = d->lambda; out.defaulted.push_back("lambda"); }
        if (!kv.count("mu")) { out.cfg.mu = d->mu; out.defaulted.push_back("mu"); }
        if (!kv.count("eta")) { out.cfg.eta = d->eta; out.defaulted.push_back("eta"); }
        if (!kv.count("epsilon")) { out.cfg.eps = d->eps; out.defaulted.push_back("epsilon"); }
        if (!kv.count("T")) { out.cfg.T = d->T; out.defaulted.push_back("T"); }
        if (!kv.count("H")) { out.cfg.H = d->H; out.defaulted.push_back("H"); }
    }
    for (const auto& [k, v] : kv)
        if (k != "env") apply_config_entry(out.cfg, k, v);
    out.cfg.validate();
    return out;
}

inline LoadedConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open file '" + path + "'");
    return load_config_text(in);
}

inline std::string config_to_text(const TrainConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "env = " << c.env_id << "\n";
    os << "seed = " << c.seed << "\n";
    os << "H = " << c.H << "\n";
    os << "gamma = " << c.gamma << "\n";
    os << "lambda = " << c.lambda << "\n";
    os << "mu = " << c.mu << "\n";
    os << "eta = " << c.eta << "\n";
    os << "epsilon = " << c.eps << "\n";
    os << "T = " << c.T << "\n";
    os << "total_env_steps = " << c.total_env_steps << "\n";
    os << "batch_size = " << c.batch_size << "\n";
    os << "model_updates_per_env_step = " << c.model_updates_per_env_step << "\n";
    os << "planner_N = " << c.planner_N << "\n";
    os << "n_elite = " << c.n_elite << "\n";
    os << "plan_iters = " << c.plan_iters << "\n";
    os << "temperature = " << c.temperature << "\n";
    os << "temp_floor = " << c.temp_floor << "\n";
    os << "temp_anneal = " << c.temp_anneal << "\n";
    os << "warmup_steps = " << c.warmup_steps << "\n";
    os << "capacity = " << c.capacity << "\n";
    os << "hidden = ";
    for (size_t i = 0; i < c.hidden.size(); ++i) os << (i ? "," : "") << c.hidden[i];
    os << "\n";
    os << "critic_steps = " << c.critic_steps << "\n";
    os << "n_model_samples = " << c.n_model_samples << "\n";
    os << "alpha = " << c.alpha << "\n";
    os << "metrics_every = " << c.metrics_every << "\n";
    os << "eval_episodes = " << c.eval_episodes << "\n";
    if (c.ablation.any()) {
        os << "ablation = ";
        bool first = true;
        auto put = [&](bool on, const char* name) {
            if (!on) return;
            os << (first ? "" : ",") << name;
            first = false;
        };
        put(c.ablation.no_smoothing, "no_smoothing");
        put(c.ablation.always_smoothing, "always_smoothing");
        put(c.ablation.no_mi, "no_mi");
        put(c.ablation.no_flex_loss, "no_flex_loss");
        os << "\n";
    }
    if (c.inject.active()) {
        os << "inject_ratio = " << c.inject.ratio << "\n";
        os << "inject_strength = " << c.inject.strength << "\n";
        os << "inject_interval = " << c.inject.interval << "\n";
    }
    return os.str();
}

}  // namespace flexplore
