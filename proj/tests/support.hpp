// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-side generators and oracles. Nothing here calls into the code under test
// except for the Matrix container itself.

#pragma once

#include "palora/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace palora::testing {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return lo + (hi - lo) * std::generate_canonical<double, 53>(engine_);
    }
    std::size_t size(std::size_t lo, std::size_t hi) {  // inclusive
        return lo + static_cast<std::size_t>(engine_() % (hi - lo + 1));
    }
    bool coin() { return (engine_() & 1U) != 0; }
    Matrix matrix(std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
        Matrix m(rows, cols);
        for (double& v : m.values()) v = uniform(lo, hi);
        return m;
    }
    std::vector<double> vec(std::size_t n, double lo = -1.0, double hi = 1.0) {
        std::vector<double> v(n);
        for (double& x : v) x = uniform(lo, hi);
        return v;
    }
    std::vector<double> simplex_point(std::size_t n) {
        std::vector<double> v(n);
        double sum = 0.0;
        for (double& x : v) sum += (x = -std::log(uniform(1e-12, 1.0)));
        for (double& x : v) x /= sum;
        return v;
    }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

inline Matrix naive_transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

/// max |a - b| / max(max |b|, floor)
inline double max_rel_diff(const Matrix& a, const Matrix& b, double floor = 1e-300) {
    double num = 0.0;
    double den = floor;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a.values()[i] - b.values()[i]));
        den = std::max(den, std::abs(b.values()[i]));
    }
    return num / den;
}

/// Central differences, written independently of the library helper.
template <class F>
Matrix numeric_gradient(F&& f, Matrix x, double eps = 1e-5) {
    Matrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.values()[i];
        x.values()[i] = keep + eps;
        const double up = f(x);
        x.values()[i] = keep - eps;
        const double down = f(x);
        x.values()[i] = keep;
        g.values()[i] = (up - down) / (2.0 * eps);
    }
    return g;
}

/// Pearson correlation of average ranks, computed by O(n^2) rank counting.
inline double brute_spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    auto ranks = [n](const std::vector<double>& v) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) {
            double less = 0.0, equal = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (v[j] < v[i]) less += 1.0;
                else if (v[j] == v[i]) equal += 1.0;
            }
            r[i] = less + (equal + 1.0) / 2.0;
        }
        return r;
    };
    const auto rx = ranks(xs), ry = ranks(ys);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

/// Indices of points not dominated by any other, by pairwise comparison.
inline std::vector<std::size_t> brute_nondominated(const std::vector<std::vector<double>>& pts) {
    auto dom = [](const std::vector<double>& a, const std::vector<double>& b) {
        bool strict = false;
        for (std::size_t t = 0; t < a.size(); ++t) {
            if (a[t] > b[t]) return false;
            if (a[t] < b[t]) strict = true;
        }
        return strict;
    };
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < pts.size() && !dominated; ++j) dominated = j != i && dom(pts[j], pts[i]);
        if (!dominated) out.push_back(i);
    }
    return out;
}

}  // namespace palora::testing
