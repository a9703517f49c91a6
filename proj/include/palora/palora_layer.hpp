// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Linear layer with T task-specific low-rank adapters. For a preference
// vector lambda the effective weight is
//
//     W_eff = W + (alpha / r) * sum_t lambda_t * A_t * B_t
//
// with W (n x m), A_t (n x r), B_t (r x m). Inputs are batches of rows, so a
// forward pass computes  y = x * W_eff^T + bias.

#pragma once

#include "palora/random.hpp"
#include "palora/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace palora {

struct AdapterPair {
    Matrix a;  // n x r
    Matrix b;  // r x m
    friend bool operator==(const AdapterPair&, const AdapterPair&) = default;
};

/// A plain dense layer; what a PaLoRA layer becomes once a preference is fixed.
struct LinearLayer {
    Matrix weight;  // n x m
    Matrix bias;    // 1 x n

    Matrix forward(const Matrix& x) const {
        Matrix y = matmul_nt(x, weight);
        add_row_bias(y, bias);
        return y;
    }
    friend bool operator==(const LinearLayer&, const LinearLayer&) = default;
};

struct LayerGradients {
    Matrix weight;
    Matrix bias;
    std::vector<Matrix> a;
    std::vector<Matrix> b;

    LayerGradients& operator+=(const LayerGradients& o) {
        weight += o.weight;
        bias += o.bias;
        for (std::size_t t = 0; t < a.size(); ++t) {
            a[t] += o.a[t];
            b[t] += o.b[t];
        }
        return *this;
    }
    LayerGradients& operator*=(double s) {
        weight *= s;
        bias *= s;
        for (std::size_t t = 0; t < a.size(); ++t) {
            a[t] *= s;
            b[t] *= s;
        }
        return *this;
    }
};

struct ParamCount {
    std::size_t base = 0;      // n * m
    std::size_t bias = 0;      // n
    std::size_t adapters = 0;  // T * r * (m + n)
    std::size_t total() const noexcept { return base + bias + adapters; }
};

class PaLoRALayer {
public:
    PaLoRALayer() = default;

    /// Kaiming fan-in weights, zero bias, A_t ~ N(0, 1/m), B_t = 0.
    static PaLoRALayer init(std::size_t out_features, std::size_t in_features, std::size_t num_tasks,
                            std::size_t rank, double alpha, std::uint64_t seed) {
        validate_dims(out_features, in_features, num_tasks, rank, alpha);
        PaLoRALayer layer;
        layer.rank_ = rank;
        layer.alpha_ = alpha;
        layer.weight_ = Matrix(out_features, in_features);
        layer.bias_ = Matrix(1, out_features);
        Rng rng(seed);
        const double w_std = std::sqrt(2.0 / static_cast<double>(in_features));
        for (double& v : layer.weight_.values()) v = w_std * rng.normal();
        layer.adapters_.resize(num_tasks);
        layer.reset_adapters(rng);
        return layer;
    }

    /// Assembles a layer from explicit blocks; shapes are validated.
    static PaLoRALayer from_blocks(Matrix weight, Matrix bias, std::vector<AdapterPair> adapters,
                                   std::size_t rank, double alpha) {
        validate_dims(weight.rows(), weight.cols(), adapters.size(), rank, alpha);
        if (bias.rows() != 1 || bias.cols() != weight.rows()) {
            throw ShapeError("PaLoRALayer: bias " + bias.shape_string() + " for weight " + weight.shape_string());
        }
        for (const auto& ad : adapters) {
            if (ad.a.rows() != weight.rows() || ad.a.cols() != rank || ad.b.rows() != rank ||
                ad.b.cols() != weight.cols()) {
                throw ShapeError("PaLoRALayer: adapter " + ad.a.shape_string() + " / " + ad.b.shape_string() +
                                 " for weight " + weight.shape_string() + " rank " + std::to_string(rank));
            }
        }
        PaLoRALayer layer;
        layer.weight_ = std::move(weight);
        layer.bias_ = std::move(bias);
        layer.adapters_ = std::move(adapters);
        layer.rank_ = rank;
        layer.alpha_ = alpha;
        return layer;
    }

    /// Fresh A_t ~ N(0, 1/m) and B_t = 0 for every task; leaves the base untouched.
    void reset_adapters(Rng& rng) {
        const double a_std = 1.0 / std::sqrt(static_cast<double>(in_features()));
        for (auto& ad : adapters_) {
            ad.a = Matrix(out_features(), rank_);
            for (double& v : ad.a.values()) v = a_std * rng.normal();
            ad.b = Matrix(rank_, in_features());
        }
    }

    std::size_t out_features() const noexcept { return weight_.rows(); }
    std::size_t in_features() const noexcept { return weight_.cols(); }
    std::size_t num_tasks() const noexcept { return adapters_.size(); }
    std::size_t rank() const noexcept { return rank_; }
    double alpha() const noexcept { return alpha_; }
    double scale() const noexcept { return alpha_ / static_cast<double>(rank_); }

    const Matrix& weight() const noexcept { return weight_; }
    const Matrix& bias() const noexcept { return bias_; }
    const std::vector<AdapterPair>& adapters() const noexcept { return adapters_; }
    Matrix& weight() noexcept { return weight_; }
    Matrix& bias() noexcept { return bias_; }
    std::vector<AdapterPair>& adapters() noexcept { return adapters_; }

    bool base_frozen() const noexcept { return base_frozen_; }
    void set_base_frozen(bool frozen) noexcept { base_frozen_ = frozen; }
    bool adapters_frozen() const noexcept { return adapters_frozen_; }
    void set_adapters_frozen(bool frozen) noexcept { adapters_frozen_ = frozen; }

    /// W + (alpha/r) * sum_t lambda_t A_t B_t. lambda need not lie on the simplex.
    Matrix compose_effective_weight(std::span<const double> lambda) const {
        check_lambda(lambda);
        Matrix w = weight_;
        for (std::size_t t = 0; t < adapters_.size(); ++t) {
            const double s = scale() * lambda[t];
            if (s == 0.0) continue;
            w.axpy(s, matmul(adapters_[t].a, adapters_[t].b));
        }
        return w;
    }

    /// Factored form: x W^T + b + (alpha/r) sum_t lambda_t (x B_t^T) A_t^T.
    Matrix forward(std::span<const double> lambda, const Matrix& x) const {
        check_lambda(lambda);
        check_input(x);
        Matrix y = matmul_nt(x, weight_);
        add_row_bias(y, bias_);
        for (std::size_t t = 0; t < adapters_.size(); ++t) {
            const double s = scale() * lambda[t];
            if (s == 0.0) continue;
            y.axpy(s, matmul_nt(matmul_nt(x, adapters_[t].b), adapters_[t].a));
        }
        return y;
    }

    struct BackwardResult {
        LayerGradients grads;
        Matrix dx;  // empty unless requested
    };

    /// Exact gradients of a scalar loss given upstream = dLoss/dy. Frozen blocks get
    /// zero gradients. Does not modify the layer.
    BackwardResult backward(std::span<const double> lambda, const Matrix& x, const Matrix& upstream,
                            bool want_input_grad = true) const {
        check_lambda(lambda);
        check_input(x);
        if (upstream.rows() != x.rows() || upstream.cols() != out_features()) {
            throw ShapeError("PaLoRALayer::backward: upstream " + upstream.shape_string() + " for input " +
                             x.shape_string() + " and weight " + weight_.shape_string());
        }
        BackwardResult out;
        auto& g = out.grads;
        if (base_frozen_) {
            g.weight = Matrix(out_features(), in_features());
            g.bias = Matrix(1, out_features());
        } else {
            g.weight = matmul_tn(upstream, x);
            g.bias = column_sums(upstream);
        }
        if (want_input_grad) out.dx = matmul(upstream, weight_);
        g.a.reserve(adapters_.size());
        g.b.reserve(adapters_.size());
        for (std::size_t t = 0; t < adapters_.size(); ++t) {
            const auto& ad = adapters_[t];
            const double s = scale() * lambda[t];
            if (s == 0.0) {
                g.a.emplace_back(out_features(), rank_);
                g.b.emplace_back(rank_, in_features());
                continue;
            }
            Matrix up_a = matmul(upstream, ad.a);  // batch x r
            if (adapters_frozen_) {
                g.a.emplace_back(out_features(), rank_);
                g.b.emplace_back(rank_, in_features());
            } else {
                g.a.push_back(s * matmul_tn(upstream, matmul_nt(x, ad.b)));
                g.b.push_back(s * matmul_tn(up_a, x));
            }
            if (want_input_grad) out.dx.axpy(s, matmul(up_a, ad.b));
        }
        return out;
    }

    ParamCount param_count() const noexcept {
        const std::size_t n = out_features();
        const std::size_t m = in_features();
        return {n * m, n, num_tasks() * rank_ * (m + n)};
    }

    /// Plain layer whose forward equals forward(lambda, .).
    LinearLayer merge(std::span<const double> lambda) const {
        return {compose_effective_weight(lambda), bias_};
    }

    /// Parameter equality; freeze flags are training state and not compared.
    friend bool operator==(const PaLoRALayer& x, const PaLoRALayer& y) {
        return x.weight_ == y.weight_ && x.bias_ == y.bias_ && x.adapters_ == y.adapters_ && x.rank_ == y.rank_ &&
               x.alpha_ == y.alpha_;
    }

private:
    static void validate_dims(std::size_t n, std::size_t m, std::size_t tasks, std::size_t rank, double alpha) {
        if (n == 0 || m == 0) throw std::invalid_argument("PaLoRALayer: zero-sized weight");
        if (tasks == 0) throw std::invalid_argument("PaLoRALayer: need at least one task");
        if (rank == 0 || rank > std::min(n, m)) {
            throw std::invalid_argument("PaLoRALayer: rank " + std::to_string(rank) + " outside [1, min(" +
                                        std::to_string(n) + ", " + std::to_string(m) + ")]");
        }
        if (!std::isfinite(alpha) || alpha < 0.0) throw std::invalid_argument("PaLoRALayer: alpha must be >= 0");
    }
    void check_lambda(std::span<const double> lambda) const {
        if (lambda.size() != adapters_.size()) {
            throw ShapeError("PaLoRALayer: preference of length " + std::to_string(lambda.size()) + " for " +
                             std::to_string(adapters_.size()) + " tasks");
        }
    }
    void check_input(const Matrix& x) const {
        if (x.cols() != in_features()) {
            throw ShapeError("PaLoRALayer: input " + x.shape_string() + " for weight " + weight_.shape_string());
        }
    }

    Matrix weight_;
    Matrix bias_;
    std::vector<AdapterPair> adapters_;
    std::size_t rank_ = 1;
    double alpha_ = 1.0;
    bool base_frozen_ = false;
    bool adapters_frozen_ = false;
};

}  // namespace palora
