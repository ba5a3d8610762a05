#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexplore/core/mat.hpp"
#include "flexplore/core/rng.hpp"

namespace flexplore {

enum class Activation { LeakyReLU, ReLU, Tanh, Identity };

inline constexpr double kLeakySlope = 0.01;

inline double act_apply(Activation a, double x) {
    switch (a) {
        case Activation::LeakyReLU: return x >= 0.0 ? x : kLeakySlope * x;
        case Activation::ReLU: return x >= 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Identity: return x;
    }
    throw std::invalid_argument("unknown activation");
}

// derivative given pre-activation input x
inline double act_deriv(Activation a, double x) {
    switch (a) {
        case Activation::LeakyReLU: return x >= 0.0 ? 1.0 : kLeakySlope;
        case Activation::ReLU: return x >= 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::Identity: return 1.0;
    }
    throw std::invalid_argument("unknown activation");
}

// Layer sizes and the activation applied after each affine layer. When
// linear_output is set the final layer skips the activation; heads that
// emit means, log-variances or logits use that form.
struct MlpSpec {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int output_dim = 0;
    Activation activation = Activation::LeakyReLU;
    bool linear_output = false;

    void validate() const {
        if (input_dim < 1 || output_dim < 1)
            throw std::invalid_argument("MlpSpec: dims must be >= 1");
        for (int h : hidden_dims)
            if (h < 1) throw std::invalid_argument("MlpSpec: dims must be >= 1");
    }

    // (out, in) shape of each affine layer
    std::vector<std::pair<int, int>> layer_shapes() const {
        std::vector<std::pair<int, int>> s;
        int prev = input_dim;
        for (int h : hidden_dims) {
            s.emplace_back(h, prev);
            prev = h;
        }
        s.emplace_back(output_dim, prev);
        return s;
    }
};

struct Layer {
    Mat w;  // out x in
    Vec b;  // out
};

// Named set of layers with paired gradient buffers and Adam state.
struct ParamBlock {
    std::string name;
    std::vector<Layer> layers;
    std::vector<Layer> grads;

    struct OptState {
        std::vector<Layer> m;
        std::vector<Layer> v;
        long step = 0;
    } opt;

    void zero_grads() {
        for (auto& g : grads) {
            g.w.zero();
            std::fill(g.b.begin(), g.b.end(), 0.0);
        }
    }

    bool grads_finite() const {
        for (const auto& g : grads)
            if (!all_finite(g.w) || !all_finite(g.b)) return false;
        return true;
    }

    bool params_finite() const {
        for (const auto& l : layers)
            if (!all_finite(l.w) || !all_finite(l.b)) return false;
        return true;
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
};

// Glorot-uniform init: +-sqrt(6 / (fan_in + fan_out)) per layer, zero bias.
inline ParamBlock init_params(const MlpSpec& spec, const std::string& name, Rng& rng) {
    spec.validate();
    ParamBlock pb;
    pb.name = name;
    for (auto [out, in] : spec.layer_shapes()) {
        Layer l;
        l.w = Mat(out, in);
        l.b = Vec(out, 0.0);
        double bound = std::sqrt(6.0 / (in + out));
        for (auto& x : l.w.a) x = rng.uniform(-bound, bound);
        pb.layers.push_back(l);
    }
    pb.grads.resize(pb.layers.size());
    pb.opt.m.resize(pb.layers.size());
    pb.opt.v.resize(pb.layers.size());
    for (size_t i = 0; i < pb.layers.size(); ++i) {
        const auto& l = pb.layers[i];
        pb.grads[i] = {Mat(l.w.rows, l.w.cols), Vec(l.b.size(), 0.0)};
        pb.opt.m[i] = {Mat(l.w.rows, l.w.cols), Vec(l.b.size(), 0.0)};
        pb.opt.v[i] = {Mat(l.w.rows, l.w.cols), Vec(l.b.size(), 0.0)};
    }
    return pb;
}

// Forward pass on a batch (rows = samples). Activation is applied after
// every layer; a spec with linear_output leaves the last layer raw.
inline Mat mlp_forward(const MlpSpec& spec, const ParamBlock& params, const Mat& x) {
    if (x.cols != spec.input_dim)
        throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.cols) +
                                    " columns, spec expects " + std::to_string(spec.input_dim));
    auto shapes = spec.layer_shapes();
    if (params.layers.size() != shapes.size())
        throw std::invalid_argument("mlp_forward: params/spec layer count mismatch");
    for (size_t i = 0; i < shapes.size(); ++i)
        if (params.layers[i].w.rows != shapes[i].first || params.layers[i].w.cols != shapes[i].second)
            throw std::invalid_argument("mlp_forward: layer " + std::to_string(i) + " shape mismatch");

    Mat h = x;
    for (size_t i = 0; i < params.layers.size(); ++i) {
        Mat z;
        affine_forward(h, params.layers[i].w, params.layers[i].b, z);
        bool last = (i + 1 == params.layers.size());
        if (!(last && spec.linear_output))
            for (auto& v : z.a) v = act_apply(spec.activation, v);
        h = std::move(z);
    }
    return h;
}

inline Vec mlp_forward(const MlpSpec& spec, const ParamBlock& params, const Vec& x) {
    return mlp_forward(spec, params, Mat::from_row(x)).row_vec(0);
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam update with bias correction; grads are zeroed afterwards.
// Non-finite gradients leave the parameters untouched and throw.
inline void adam_step(ParamBlock& pb, const AdamConfig& cfg = {}) {
    if (!pb.grads_finite())
        throw std::runtime_error("adam_step: non-finite gradient in block '" + pb.name + "'");
    pb.opt.step += 1;
    double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(pb.opt.step));
    double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(pb.opt.step));
    auto update = [&](double* p, double* g, double* m, double* v, size_t n) {
        for (size_t i = 0; i < n; ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            double mh = m[i] / c1;
            double vh = v[i] / c2;
            p[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
            g[i] = 0.0;
        }
    };
    for (size_t li = 0; li < pb.layers.size(); ++li) {
        update(pb.layers[li].w.a.data(), pb.grads[li].w.a.data(),
               pb.opt.m[li].w.a.data(), pb.opt.v[li].w.a.data(), pb.layers[li].w.size());
        update(pb.layers[li].b.data(), pb.grads[li].b.data(),
               pb.opt.m[li].b.data(), pb.opt.v[li].b.data(), pb.layers[li].b.size());
    }
    if (!pb.params_finite())
        throw std::runtime_error("adam_step: update produced non-finite parameters in '" + pb.name + "'");
}

// Largest singular value by power iteration on W^T W. The estimate is the
// Rayleigh-quotient norm ||W v_k||, nondecreasing in k. An all-zero matrix
// returns 0.
struct SpectralResult {
    double sigma = 0.0;
    Vec u;  // left singular vector, length rows
    Vec v;  // right singular vector, length cols
};

inline SpectralResult spectral_norm_full(const Mat& w, int iters) {
    if (iters < 1) throw std::invalid_argument("spectral_norm: iters must be >= 1");
    SpectralResult r;
    r.v = Vec(w.cols, 1.0 / std::sqrt(static_cast<double>(w.cols)));
    r.u = Vec(w.rows, 0.0);
    for (int it = 0; it < iters; ++it) {
        // u = W v
        for (int i = 0; i < w.rows; ++i) {
            const double* wi = w.row(i);
            double acc = 0.0;
            for (int j = 0; j < w.cols; ++j) acc += wi[j] * r.v[j];
            r.u[i] = acc;
        }
        double un = norm2(r.u);
        if (un == 0.0) return {0.0, Vec(w.rows, 0.0), Vec(w.cols, 0.0)};
        for (auto& x : r.u) x /= un;
        // v = W^T u
        std::fill(r.v.begin(), r.v.end(), 0.0);
        for (int i = 0; i < w.rows; ++i) {
            const double* wi = w.row(i);
            for (int j = 0; j < w.cols; ++j) r.v[j] += wi[j] * r.u[i];
        }
        double vn = norm2(r.v);
        if (vn == 0.0) return {0.0, Vec(w.rows, 0.0), Vec(w.cols, 0.0)};
        for (auto& x : r.v) x /= vn;
        r.sigma = vn;  // ||W^T u|| with unit u; converges to sigma_1 from below
    }
    return r;
}

inline double spectral_norm(const Mat& w, int iters) {
    return spectral_norm_full(w, iters).sigma;
}

inline constexpr int kSpectralItersTrain = 20;
inline constexpr int kSpectralItersVerify = 200;

}  // namespace flexplore
