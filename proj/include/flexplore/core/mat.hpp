#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace flexplore {

using Vec = std::vector<double>;

// Dense row-major matrix. Rows are the batch dimension everywhere in this
// library; a single sample is a 1-row matrix.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
    Mat(int r, int c, double fill) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

    static Mat from_row(const Vec& v) {
        Mat m(1, static_cast<int>(v.size()));
        m.a = v;
        return m;
    }

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

    Vec row_vec(int i) const { return Vec(row(i), row(i) + cols); }

    size_t size() const { return a.size(); }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline bool all_finite(const double* p, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.a.data(), m.size()); }
inline bool all_finite(const Vec& v) { return all_finite(v.data(), v.size()); }

// eight-lane dot product; the fixed summation order keeps results
// reproducible while letting the reduction vectorize
inline double dot8(const double* a, const double* b, int n) {
    double s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int k = 0;
    for (; k + 8 <= n; k += 8)
        for (int l = 0; l < 8; ++l) s[l] += a[k + l] * b[k + l];
    double t = ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
    for (; k < n; ++k) t += a[k] * b[k];
    return t;
}

// y = x . w^T + 1 b^T   (x: n*in, w: out*in, b: out, y: n*out)
inline void affine_forward(const Mat& x, const Mat& w, const Vec& b, Mat& y) {
    assert(x.cols == w.cols && static_cast<int>(b.size()) == w.rows);
    y = Mat(x.rows, w.rows);
    for (int i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        for (int o = 0; o < w.rows; ++o)
            yi[o] = b[o] + dot8(xi, w.row(o), x.cols);
    }
}

// dx += dy . w ; dw += dy^T . x ; db += colsum(dy)
inline void affine_backward(const Mat& x, const Mat& w, const Mat& dy,
                            Mat* dx, Mat* dw, Vec* db) {
    if (dx) {
        assert(dx->same_shape(x));
        for (int i = 0; i < x.rows; ++i) {
            const double* gi = dy.row(i);
            double* dxi = dx->row(i);
            for (int o = 0; o < w.rows; ++o) {
                const double g = gi[o];
                if (g == 0.0) continue;
                const double* wo = w.row(o);
                for (int k = 0; k < w.cols; ++k) dxi[k] += g * wo[k];
            }
        }
    }
    if (dw) {
        for (int i = 0; i < x.rows; ++i) {
            const double* gi = dy.row(i);
            const double* xi = x.row(i);
            for (int o = 0; o < w.rows; ++o) {
                const double g = gi[o];
                if (g == 0.0) continue;
                double* dwo = dw->row(o);
                for (int k = 0; k < w.cols; ++k) dwo[k] += g * xi[k];
            }
        }
    }
    if (db) {
        for (int i = 0; i < dy.rows; ++i) {
            const double* gi = dy.row(i);
            for (int o = 0; o < dy.cols; ++o) (*db)[o] += gi[o];
        }
    }
}

inline double dot(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const double* p, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += p[i] * p[i];
    return std::sqrt(s);
}

inline double norm2(const Vec& v) { return norm2(v.data(), v.size()); }

inline double norm_inf(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline Vec concat(const Vec& a, const Vec& b) {
    Vec r;
    r.reserve(a.size() + b.size());
    r.insert(r.end(), a.begin(), a.end());
    r.insert(r.end(), b.begin(), b.end());
    return r;
}

}  // namespace flexplore
