// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrices and the handful of kernels the networks need.
// Batches follow the rows-are-samples convention throughout.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace palora {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (values_.size() != rows_ * cols_) {
            throw ShapeError("Matrix: " + std::to_string(values_.size()) + " values for " +
                             std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        values_.reserve(rows_ * cols_);
        for (const auto& row : rows) {
            if (row.size() != cols_) throw ShapeError("Matrix: ragged initializer");
            values_.insert(values_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {values_.data() + r * cols_, cols_}; }

    void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const noexcept {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    Matrix& operator+=(const Matrix& o) {
        require_same(o, "operator+=");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_same(o, "operator-=");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    Matrix& operator*=(double s) noexcept {
        for (double& v : values_) v *= s;
        return *this;
    }
    /// this += s * o
    void axpy(double s, const Matrix& o) {
        require_same(o, "axpy");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * o.values_[i];
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }
    friend bool operator==(const Matrix&, const Matrix&) = default;

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    /// Rows [first, first + count).
    Matrix slice_rows(std::size_t first, std::size_t count) const {
        if (first + count > rows_) throw ShapeError("slice_rows: out of range");
        Matrix out(count, cols_);
        std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_,
                    out.values_.begin());
        return out;
    }
    Matrix gather_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols_);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] >= rows_) throw ShapeError("gather_rows: index out of range");
            std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(idx[i] * cols_), cols_,
                        out.values_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
        }
        return out;
    }

private:
    void require_same(const Matrix& o, const char* what) const {
        if (!same_shape(o)) {
            throw ShapeError(std::string(what) + ": " + shape_string() + " vs " + o.shape_string());
        }
    }

public:
    std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajor> view(const Matrix& m) {
    return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
inline Eigen::Map<RowMajor> view(Matrix& m) {
    return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

}  // namespace detail

/// a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
    Matrix out(a.rows(), b.cols());
    if (a.cols() > 0) detail::view(out).noalias() = detail::view(a) * detail::view(b);
    return out;
}

/// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T");
    Matrix out(a.rows(), b.rows());
    if (a.cols() > 0) detail::view(out).noalias() = detail::view(a) * detail::view(b).transpose();
    return out;
}

/// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: " + a.shape_string() + "^T * " + b.shape_string());
    Matrix out(a.cols(), b.cols());
    if (a.rows() > 0) detail::view(out).noalias() = detail::view(a).transpose() * detail::view(b);
    return out;
}

/// Adds a length-cols bias row to every row of x.
inline void add_row_bias(Matrix& x, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols()) {
        throw ShapeError("add_row_bias: bias " + bias.shape_string() + " for " + x.shape_string());
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias(0, c);
    }
}

/// Sums over the batch (rows), giving a 1 x cols matrix.
inline Matrix column_sums(const Matrix& x) {
    Matrix out(1, x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out(0, c) += row[c];
    }
    return out;
}

struct ReluResult {
    Matrix y;
    Matrix dx;
};

inline Matrix relu(const Matrix& x) {
    Matrix y = x;
    for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    return y;
}

/// dx = upstream where x > 0, else 0.
inline Matrix relu_backward(const Matrix& x, const Matrix& upstream) {
    if (!x.same_shape(upstream)) throw ShapeError("relu_backward: " + x.shape_string() + " vs " + upstream.shape_string());
    Matrix dx = upstream;
    auto xs = x.values();
    auto ds = dx.values();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!(xs[i] > 0.0)) ds[i] = 0.0;
    }
    return dx;
}

inline ReluResult relu_fwd_bwd(const Matrix& x, const Matrix& upstream) {
    return {relu(x), relu_backward(x, upstream)};
}

struct LossResult {
    double loss = 0.0;
    Matrix grad;
};

/// Mean negative log-likelihood of the labels under a row-wise softmax of the logits.
inline LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         logits.shape_string() + " logits");
    }
    const std::size_t classes = logits.cols();
    const double inv_batch = logits.rows() == 0 ? 0.0 : 1.0 / static_cast<double>(logits.rows());
    LossResult out{0.0, Matrix(logits.rows(), classes)};
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const int label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) +
                                    " outside [0, " + std::to_string(classes) + ")");
        }
        auto z = logits.row(r);
        const double zmax = *std::max_element(z.begin(), z.end());
        double denom = 0.0;
        for (double v : z) denom += std::exp(v - zmax);
        const double log_denom = std::log(denom);
        out.loss += log_denom - (z[static_cast<std::size_t>(label)] - zmax);
        auto g = out.grad.row(r);
        for (std::size_t c = 0; c < classes; ++c) {
            g[c] = std::exp(z[c] - zmax - log_denom) * inv_batch;
        }
        g[static_cast<std::size_t>(label)] -= inv_batch;
    }
    out.loss *= inv_batch;
    return out;
}

/// Mean squared error over every entry.
inline LossResult mse(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) throw ShapeError("mse: " + pred.shape_string() + " vs " + target.shape_string());
    LossResult out{0.0, Matrix(pred.rows(), pred.cols())};
    if (pred.empty()) return out;
    const double inv = 1.0 / static_cast<double>(pred.size());
    auto p = pred.values();
    auto t = target.values();
    auto g = out.grad.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        out.loss += d * d;
        g[i] = 2.0 * d * inv;
    }
    out.loss *= inv;
    return out;
}

/// Central-difference gradient of a scalar function of a matrix.
inline Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    Matrix grad(x.rows(), x.cols());
    Matrix probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe.values()[i];
        probe.values()[i] = orig + eps;
        const double up = f(probe);
        probe.values()[i] = orig - eps;
        const double down = f(probe);
        probe.values()[i] = orig;
        grad.values()[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, floor)
inline double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-12) {
    if (!a.same_shape(b)) throw ShapeError("relative_error: " + a.shape_string() + " vs " + b.shape_string());
    double diff = 0.0;
    double scale = floor;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a.values()[i] - b.values()[i]));
        scale = std::max(scale, std::abs(b.values()[i]));
    }
    return diff / scale;
}

}  // namespace palora
