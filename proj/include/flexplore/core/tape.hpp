#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "flexplore/core/nn.hpp"

namespace flexplore {

// Reverse-mode tape over matrix-valued nodes. Supported primitives: affine
// layers (reading weights from a ParamBlock), elementwise activations,
// square/abs/log/exp/negate/clamp, hadamard products, row-wise softmax,
// slicing/concatenation, reductions, single-entry picks and Gaussian
// log-densities. backward() runs the recorded closures in reverse; parameter
// gradients accumulate directly into the owning ParamBlock's grad buffers.
//
// Nodes are indices into the tape; a tape is built for one loss evaluation
// and then discarded. Distinct tapes never share mutable state, so losses on
// disjoint batches may be evaluated concurrently.
class Tape {
public:
    using Id = int;

    struct Node {
        Mat val;
        Mat grad;
        std::function<void()> back;  // empty for leaves
    };

    std::vector<Node> nodes;

    Id leaf(Mat v) {
        nodes.push_back({std::move(v), Mat(), nullptr});
        return last();
    }

    Id leaf_row(const Vec& v) { return leaf(Mat::from_row(v)); }

    const Mat& val(Id id) const { return nodes[id].val; }
    const Mat& grad(Id id) const { return nodes[id].grad; }
    double scalar(Id id) const { return nodes[id].val.a[0]; }

    // y = x W^T + b. When accumulate_param_grads is false the layer acts as
    // a frozen transformation: input gradients still flow, the block's grad
    // buffers stay untouched.
    Id affine(ParamBlock& pb, int layer, Id x, bool accumulate_param_grads = true) {
        if (layer < 0 || layer >= static_cast<int>(pb.layers.size()))
            throw std::invalid_argument("tape: affine layer index out of range");
        Layer& L = pb.layers[layer];
        if (nodes[x].val.cols != L.w.cols)
            throw std::invalid_argument("tape: affine input width " + std::to_string(nodes[x].val.cols) +
                                        " != layer fan-in " + std::to_string(L.w.cols));
        Mat y;
        affine_forward(nodes[x].val, L.w, L.b, y);
        Id out = push(std::move(y));
        ParamBlock* pbp = &pb;
        nodes[out].back = [this, out, x, pbp, layer, accumulate_param_grads] {
            Layer& lw = pbp->layers[layer];
            Mat* dw = accumulate_param_grads ? &pbp->grads[layer].w : nullptr;
            Vec* db = accumulate_param_grads ? &pbp->grads[layer].b : nullptr;
            affine_backward(nodes[x].val, lw.w, nodes[out].grad, &nodes[x].grad, dw, db);
        };
        return out;
    }

    Id activation(Activation a, Id x) {
        Mat y = nodes[x].val;
        for (auto& v : y.a) v = act_apply(a, v);
        Id out = push(std::move(y));
        nodes[out].back = [this, out, x, a] {
            const Mat& xv = nodes[x].val;
            for (size_t i = 0; i < xv.a.size(); ++i)
                nodes[x].grad.a[i] += nodes[out].grad.a[i] * act_deriv(a, xv.a[i]);
        };
        return out;
    }

    Id add(Id a, Id b) { return binary(a, b, [](double x, double y) { return x + y; },
                                       [](double, double) { return 1.0; },
                                       [](double, double) { return 1.0; }); }

    Id sub(Id a, Id b) { return binary(a, b, [](double x, double y) { return x - y; },
                                       [](double, double) { return 1.0; },
                                       [](double, double) { return -1.0; }); }

    Id mul(Id a, Id b) { return binary(a, b, [](double x, double y) { return x * y; },
                                       [](double, double y) { return y; },
                                       [](double x, double) { return x; }); }

    Id scale(Id a, double c) {
        Mat y = nodes[a].val;
        for (auto& v : y.a) v *= c;
        Id out = push(std::move(y));
        nodes[out].back = [this, out, a, c] {
            for (size_t i = 0; i < nodes[a].grad.a.size(); ++i)
                nodes[a].grad.a[i] += c * nodes[out].grad.a[i];
        };
        return out;
    }

    Id add_const(Id a, double c) {
        Mat y = nodes[a].val;
        for (auto& v : y.a) v += c;
        Id out = push(std::move(y));
        nodes[out].back = [this, out, a] { accumulate(a, out, 1.0); };
        return out;
    }

    Id neg(Id a) { return scale(a, -1.0); }

    Id square(Id a) {
        Mat y = nodes[a].val;
        for (auto& v : y.a) v = v * v;
        Id out = push(std::move(y));
        nodes[out].back = [this, out, a] {
            for (size_t i = 0; i < nodes[a].grad.a.size(); ++i)
                nodes[a].grad.a[i] += 2.0 * nodes[a].val.a[i] * nodes[out].grad.a[i];
        };
        return out;
    }

    // |x| with subgradient 0 at the kink
    Id abs(Id a) {
        Mat y = nodes[a].val;
        for (auto& v : y.a) v = std::abs(v);
        Id out = push(std::move(y));
        nodes[out].back = [this, out, a] {
            for (size_t i = 0; i < nodes[a].grad.a.size(); ++i) {
                double x = nodes[a].val.a[i];
                double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                nodes[a].grad.a[i] += s * nodes[out].grad.a[i];
            }
        };
        return out;
    }

    Id log(Id a) {
        Mat y = nodes[a].val;
        for (auto& v : y.a) {
            if (v <= 0.0) throw std::domain_error("tape: log of nonpositive value");
            v = std::log(v);
        }
        Id out = push(std::move(y));
        nodes[out].back = [this, out, a] {
            for (size_t i = 0; i < nodes[a].grad.a.size(); ++i)
                nodes[a].grad.a[i] += nodes[out].grad.a[i] / nodes[a].val.a[i];
        };
        return out;
    }

    Id exp(Id a) {
        Mat y = nodes[a].val;
        for (auto& v : y.a) v = std::exp(v);
        Id out = push(std::move(y));
        nodes[out].back = [this, out, a] {
            for (size_t i = 0; i < nodes[a].grad.a.size(); ++i)
                nodes[a].grad.a[i] += nodes[out].val.a[i] * nodes[out].grad.a[i];
        };
        return out;
    }

    // hard clamp; gradient passes through strictly inside the interval
    Id clamp(Id a, double lo, double hi) {
        Mat y = nodes[a].val;
        for (auto& v : y.a) v = v < lo ? lo : (v > hi ? hi : v);
        Id out = push(std::move(y));
        nodes[out].back = [this, out, a, lo, hi] {
            for (size_t i = 0; i < nodes[a].grad.a.size(); ++i) {
                double x = nodes[a].val.a[i];
                if (x > lo && x < hi) nodes[a].grad.a[i] += nodes[out].grad.a[i];
            }
        };
        return out;
    }

    Id softmax_rows(Id a) {
        Mat y = nodes[a].val;
        for (int i = 0; i < y.rows; ++i) {
            double* r = y.row(i);
            double mx = r[0];
            for (int j = 1; j < y.cols; ++j) mx = std::max(mx, r[j]);
            double s = 0.0;
            for (int j = 0; j < y.cols; ++j) {
                r[j] = std::exp(r[j] - mx);
                s += r[j];
            }
            for (int j = 0; j < y.cols; ++j) r[j] /= s;
        }
        Id out = push(std::move(y));
        nodes[out].back = [this, out, a] {
            const Mat& p = nodes[out].val;
            const Mat& g = nodes[out].grad;
            for (int i = 0; i < p.rows; ++i) {
                double gp = 0.0;
                for (int j = 0; j < p.cols; ++j) gp += g(i, j) * p(i, j);
                for (int j = 0; j < p.cols; ++j)
                    nodes[a].grad(i, j) += p(i, j) * (g(i, j) - gp);
            }
        };
        return out;
    }

    Id slice_cols(Id a, int c0, int c1) {
        const Mat& x = nodes[a].val;
        if (c0 < 0 || c1 > x.cols || c0 >= c1)
            throw std::invalid_argument("tape: bad column slice");
        Mat y(x.rows, c1 - c0);
        for (int i = 0; i < x.rows; ++i)
            for (int j = c0; j < c1; ++j) y(i, j - c0) = x(i, j);
        Id out = push(std::move(y));
        nodes[out].back = [this, out, a, c0] {
            const Mat& g = nodes[out].grad;
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) nodes[a].grad(i, c0 + j) += g(i, j);
        };
        return out;
    }

    Id concat_cols(Id a, Id b) {
        const Mat& x = nodes[a].val;
        const Mat& y = nodes[b].val;
        if (x.rows != y.rows) throw std::invalid_argument("tape: concat row mismatch");
        Mat z(x.rows, x.cols + y.cols);
        for (int i = 0; i < x.rows; ++i) {
            for (int j = 0; j < x.cols; ++j) z(i, j) = x(i, j);
            for (int j = 0; j < y.cols; ++j) z(i, x.cols + j) = y(i, j);
        }
        Id out = push(std::move(z));
        nodes[out].back = [this, out, a, b] {
            const Mat& g = nodes[out].grad;
            int ac = nodes[a].val.cols;
            for (int i = 0; i < g.rows; ++i) {
                for (int j = 0; j < ac; ++j) nodes[a].grad(i, j) += g(i, j);
                for (int j = 0; j < nodes[b].val.cols; ++j) nodes[b].grad(i, j) += g(i, ac + j);
            }
        };
        return out;
    }

    Id sum_all(Id a) {
        double s = 0.0;
        for (double v : nodes[a].val.a) s += v;
        Id out = push(Mat(1, 1, s));
        nodes[out].back = [this, out, a] { accumulate(a, out, 1.0); };
        return out;
    }

    Id mean_all(Id a) {
        size_t n = nodes[a].val.size();
        double s = 0.0;
        for (double v : nodes[a].val.a) s += v;
        Id out = push(Mat(1, 1, s / static_cast<double>(n)));
        nodes[out].back = [this, out, a, n] { accumulate(a, out, 1.0 / static_cast<double>(n)); };
        return out;
    }

    Id pick(Id a, int i, int j) {
        Id out = push(Mat(1, 1, nodes[a].val(i, j)));
        nodes[out].back = [this, out, a, i, j] { nodes[a].grad(i, j) += nodes[out].grad.a[0]; };
        return out;
    }

    // Row-wise diagonal-Gaussian log-density of fixed observations x:
    // sum_j [ -logvar/2 - log(2 pi)/2 - (x - mu)^2 / (2 exp(logvar)) ].
    Id gaussian_logpdf(Id mu, Id logvar, const Mat& x) {
        const Mat& m = nodes[mu].val;
        const Mat& lv = nodes[logvar].val;
        if (!m.same_shape(lv) || !m.same_shape(x))
            throw std::invalid_argument("tape: gaussian_logpdf shape mismatch");
        constexpr double kLog2Pi = 1.8378770664093454836;
        Mat y(m.rows, 1);
        for (int i = 0; i < m.rows; ++i) {
            double lp = 0.0;
            for (int j = 0; j < m.cols; ++j) {
                double d = x(i, j) - m(i, j);
                lp += -0.5 * lv(i, j) - 0.5 * kLog2Pi - d * d / (2.0 * std::exp(lv(i, j)));
            }
            y(i, 0) = lp;
        }
        Id out = push(std::move(y));
        Mat xc = x;
        nodes[out].back = [this, out, mu, logvar, xc] {
            const Mat& m = nodes[mu].val;
            const Mat& lv = nodes[logvar].val;
            const Mat& g = nodes[out].grad;
            for (int i = 0; i < m.rows; ++i) {
                double gi = g(i, 0);
                if (gi == 0.0) continue;
                for (int j = 0; j < m.cols; ++j) {
                    double var = std::exp(lv(i, j));
                    double d = xc(i, j) - m(i, j);
                    nodes[mu].grad(i, j) += gi * d / var;
                    nodes[logvar].grad(i, j) += gi * (-0.5 + d * d / (2.0 * var));
                }
            }
        };
        return out;
    }

    // d sigma_1 / d W = u v^T with (u, v) the dominant singular pair. The
    // pair comes from power iteration at the recorded iteration budget.
    Id spectral_norm_node(ParamBlock& pb, int layer, int iters) {
        SpectralResult r = spectral_norm_full(pb.layers[layer].w, iters);
        Id out = push(Mat(1, 1, r.sigma));
        ParamBlock* pbp = &pb;
        nodes[out].back = [this, out, pbp, layer, r] {
            double g = nodes[out].grad.a[0];
            if (g == 0.0) return;
            Mat& dw = pbp->grads[layer].w;
            for (int i = 0; i < dw.rows; ++i)
                for (int j = 0; j < dw.cols; ++j) dw(i, j) += g * r.u[i] * r.v[j];
        };
        return out;
    }

    // Reverse accumulation from a scalar node.
    void backward(Id root) {
        if (nodes[root].val.size() != 1)
            throw std::invalid_argument("tape: backward root must be scalar");
        for (auto& n : nodes) {
            n.grad = Mat(n.val.rows, n.val.cols);
        }
        nodes[root].grad.a[0] = 1.0;
        for (int i = root; i >= 0; --i)
            if (nodes[i].back) nodes[i].back();
    }

private:
    Id last() const { return static_cast<Id>(nodes.size()) - 1; }

    Id push(Mat v) {
        nodes.push_back({std::move(v), Mat(), nullptr});
        return last();
    }

    void accumulate(Id a, Id out, double w) {
        double g = nodes[out].grad.a[0] * w;
        for (size_t i = 0; i < nodes[a].grad.a.size(); ++i) nodes[a].grad.a[i] += g;
    }

    template <class F, class DA, class DB>
    Id binary(Id a, Id b, F f, DA da, DB db) {
        const Mat& x = nodes[a].val;
        const Mat& y = nodes[b].val;
        if (!x.same_shape(y)) throw std::invalid_argument("tape: binary op shape mismatch");
        Mat z(x.rows, x.cols);
        for (size_t i = 0; i < x.a.size(); ++i) z.a[i] = f(x.a[i], y.a[i]);
        Id out = push(std::move(z));
        nodes[out].back = [this, out, a, b, da, db] {
            const Mat& x = nodes[a].val;
            const Mat& y = nodes[b].val;
            const Mat& g = nodes[out].grad;
            for (size_t i = 0; i < x.a.size(); ++i) {
                nodes[a].grad.a[i] += g.a[i] * da(x.a[i], y.a[i]);
                nodes[b].grad.a[i] += g.a[i] * db(x.a[i], y.a[i]);
            }
        };
        return out;
    }
};

// Taped MLP forward matching mlp_forward().
inline Tape::Id mlp_forward_tape(Tape& t, const MlpSpec& spec, ParamBlock& pb, Tape::Id x,
                                 bool accumulate_param_grads = true) {
    Tape::Id h = x;
    for (size_t i = 0; i < pb.layers.size(); ++i) {
        h = t.affine(pb, static_cast<int>(i), h, accumulate_param_grads);
        bool lastl = (i + 1 == pb.layers.size());
        if (!(lastl && spec.linear_output)) h = t.activation(spec.activation, h);
    }
    return h;
}

}  // namespace flexplore
