#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "flexplore/core/mat.hpp"

namespace flexplore {

// Weighted empirical distribution on the real line. Equal-weight samples
// are the common case; weights, when given, must sum to 1.
struct EmpiricalDist1D {
    std::vector<double> points;
    std::vector<double> weights;  // empty => uniform

    static EmpiricalDist1D samples(std::vector<double> xs) { return {std::move(xs), {}}; }

    static EmpiricalDist1D weighted(std::vector<double> xs, std::vector<double> ws) {
        return {std::move(xs), std::move(ws)};
    }

    void validate() const {
        if (points.empty()) throw std::invalid_argument("EmpiricalDist1D: empty support");
        if (!weights.empty()) {
            if (weights.size() != points.size())
                throw std::invalid_argument("EmpiricalDist1D: weight/point count mismatch");
            double s = 0.0;
            for (double w : weights) {
                if (w < 0.0) throw std::invalid_argument("EmpiricalDist1D: negative weight");
                s += w;
            }
            if (std::abs(s - 1.0) > 1e-9)
                throw std::invalid_argument("EmpiricalDist1D: weights must sum to 1");
        }
    }

    double weight(size_t i) const {
        return weights.empty() ? 1.0 / static_cast<double>(points.size()) : weights[i];
    }
};

// Exact 1-D W1 via the sorted-quantile coupling: integrate |F_p^{-1} -
// F_q^{-1}| by sweeping both cumulative weight profiles in parallel.
inline double wasserstein_1d(const EmpiricalDist1D& p, const EmpiricalDist1D& q) {
    p.validate();
    q.validate();
    std::vector<size_t> ip(p.points.size()), iq(q.points.size());
    for (size_t i = 0; i < ip.size(); ++i) ip[i] = i;
    for (size_t i = 0; i < iq.size(); ++i) iq[i] = i;
    std::sort(ip.begin(), ip.end(), [&](size_t a, size_t b) { return p.points[a] < p.points[b]; });
    std::sort(iq.begin(), iq.end(), [&](size_t a, size_t b) { return q.points[a] < q.points[b]; });

    double total = 0.0;
    size_t a = 0, b = 0;
    double rem_a = p.weight(ip[0]);
    double rem_b = q.weight(iq[0]);
    while (a < ip.size() && b < iq.size()) {
        double m = std::min(rem_a, rem_b);
        total += m * std::abs(p.points[ip[a]] - q.points[iq[b]]);
        rem_a -= m;
        rem_b -= m;
        if (rem_a <= 1e-15) {
            ++a;
            if (a < ip.size()) rem_a = p.weight(ip[a]);
        }
        if (rem_b <= 1e-15) {
            ++b;
            if (b < iq.size()) rem_b = q.weight(iq[b]);
        }
    }
    return total;
}

// Brute-force exact transport cost by min-cost flow (successive shortest
// paths) over the full bipartite joint. Independent verification route for
// wasserstein_1d; capped at small supports by design.
inline double transport_lp_oracle(const EmpiricalDist1D& p, const EmpiricalDist1D& q,
                                  size_t max_support = 8) {
    p.validate();
    q.validate();
    size_t n = p.points.size(), m = q.points.size();
    if (n > max_support || m > max_support)
        throw std::invalid_argument("transport_lp_oracle: support exceeds cap of " +
                                    std::to_string(max_support));

    // nodes: 0 = source, 1..n = p, n+1..n+m = q, n+m+1 = sink
    struct Edge {
        int to;
        double cap;
        double cost;
        int rev;
    };
    int N = static_cast<int>(n + m) + 2;
    int src = 0, snk = N - 1;
    std::vector<std::vector<Edge>> g(N);
    auto add_edge = [&](int u, int v, double cap, double cost) {
        g[u].push_back({v, cap, cost, static_cast<int>(g[v].size())});
        g[v].push_back({u, 0.0, -cost, static_cast<int>(g[u].size()) - 1});
    };
    for (size_t i = 0; i < n; ++i) add_edge(src, static_cast<int>(i) + 1, p.weight(i), 0.0);
    for (size_t j = 0; j < m; ++j)
        add_edge(static_cast<int>(n + j) + 1, snk, q.weight(j), 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j)
            add_edge(static_cast<int>(i) + 1, static_cast<int>(n + j) + 1,
                     std::numeric_limits<double>::infinity(),
                     std::abs(p.points[i] - q.points[j]));

    double total_cost = 0.0;
    const double kEps = 1e-13;
    while (true) {
        // Bellman-Ford shortest path in residual graph
        std::vector<double> dist(N, std::numeric_limits<double>::infinity());
        std::vector<int> pe(N, -1), pv(N, -1);
        dist[src] = 0.0;
        for (int it = 0; it < N; ++it) {
            bool changed = false;
            for (int u = 0; u < N; ++u) {
                if (!std::isfinite(dist[u])) continue;
                for (size_t ei = 0; ei < g[u].size(); ++ei) {
                    const Edge& e = g[u][ei];
                    if (e.cap <= kEps) continue;
                    if (dist[u] + e.cost < dist[e.to] - 1e-15) {
                        dist[e.to] = dist[u] + e.cost;
                        pv[e.to] = u;
                        pe[e.to] = static_cast<int>(ei);
                        changed = true;
                    }
                }
            }
            if (!changed) break;
        }
        if (!std::isfinite(dist[snk])) break;
        double push = std::numeric_limits<double>::infinity();
        for (int v = snk; v != src; v = pv[v]) push = std::min(push, g[pv[v]][pe[v]].cap);
        if (push <= kEps) break;
        for (int v = snk; v != src; v = pv[v]) {
            Edge& e = g[pv[v]][pe[v]];
            e.cap -= push;
            g[v][e.rev].cap += push;
        }
        total_cost += push * dist[snk];
    }
    return total_cost;
}

struct KlTvResult {
    double kl = 0.0;
    bool kl_infinite = false;
    double tv = 0.0;
};

// Plug-in KL and total variation on histograms over a common binning.
// KL is flagged infinite when p has mass where q has none.
inline KlTvResult kl_tv_disjoint_demo(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size() || p.empty())
        throw std::invalid_argument("kl_tv: histograms need a common nonempty binning");
    KlTvResult r;
    for (size_t i = 0; i < p.size(); ++i) {
        r.tv += 0.5 * std::abs(p[i] - q[i]);
        if (p[i] > 0.0) {
            if (q[i] <= 0.0)
                r.kl_infinite = true;
            else
                r.kl += p[i] * std::log(p[i] / q[i]);
        }
    }
    if (r.kl_infinite) r.kl = std::numeric_limits<double>::infinity();
    return r;
}

}  // namespace flexplore
