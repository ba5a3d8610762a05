#pragma once

#include <numbers>
#include <stdexcept>

#include "flexplore/core/tape.hpp"

namespace flexplore {

// Gumbel-Softmax relaxation of a categorical draw. Output lies on the
// probability simplex and is differentiable in the logits (soft sample; no
// straight-through).
inline Vec gumbel_softmax(const Vec& logits, double temperature, Rng& rng) {
    if (temperature <= 0.0) throw std::invalid_argument("gumbel_softmax: temperature must be > 0");
    if (logits.empty()) throw std::invalid_argument("gumbel_softmax: empty logits");
    Vec y(logits.size());
    double mx = -1e300;
    for (size_t i = 0; i < logits.size(); ++i) {
        y[i] = (logits[i] + rng.gumbel()) / temperature;
        mx = std::max(mx, y[i]);
    }
    double s = 0.0;
    for (auto& v : y) {
        v = std::exp(v - mx);
        s += v;
    }
    for (auto& v : y) v /= s;
    return y;
}

inline Tape::Id gumbel_softmax_tape(Tape& t, Tape::Id logits, double temperature, Rng& rng) {
    if (temperature <= 0.0) throw std::invalid_argument("gumbel_softmax: temperature must be > 0");
    const Mat& lv = t.val(logits);
    Mat noise(lv.rows, lv.cols);
    for (auto& v : noise.a) v = rng.gumbel();
    Tape::Id z = t.scale(t.add(logits, t.leaf(std::move(noise))), 1.0 / temperature);
    return t.softmax_rows(z);
}

inline int argmax(const Vec& v) {
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

struct GaussianSample {
    Vec z;
    double logp = 0.0;
};

inline double gaussian_logpdf(const Vec& z, const Vec& mu, const Vec& sigma) {
    constexpr double kLog2Pi = 1.8378770664093454836;
    double lp = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        double d = z[i] - mu[i];
        lp += -std::log(sigma[i]) - 0.5 * kLog2Pi - d * d / (2.0 * sigma[i] * sigma[i]);
    }
    return lp;
}

// Reparameterized draw z = mu + sigma * eps with its log-density.
inline GaussianSample gaussian_sample_logprob(const Vec& mu, const Vec& sigma, Rng& rng) {
    if (mu.size() != sigma.size())
        throw std::invalid_argument("gaussian_sample_logprob: mu/sigma length mismatch");
    for (double s : sigma)
        if (!(s > 0.0)) throw std::invalid_argument("gaussian_sample_logprob: sigma must be > 0");
    GaussianSample out;
    out.z.resize(mu.size());
    for (size_t i = 0; i < mu.size(); ++i) out.z[i] = mu[i] + sigma[i] * rng.normal();
    out.logp = gaussian_logpdf(out.z, mu, sigma);
    return out;
}

}  // namespace flexplore
