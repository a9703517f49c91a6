// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-task networks built from PaLoRA layers: a shared encoder followed by
// one head per task (or a single head shared by every task). Every layer,
// heads included, carries T task adapters.

#pragma once

#include "palora/dataset.hpp"
#include "palora/palora_layer.hpp"
#include "palora/preferences.hpp"
#include "palora/tensor.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace palora {

enum class Activation { relu, identity };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }
inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

struct HeadSpec {
    std::size_t out_dim = 1;
    LossKind loss = LossKind::classification;
    friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

struct ModelSpec {
    /// Input width followed by the width of every encoder layer.
    std::vector<std::size_t> encoder_dims;
    Activation activation = Activation::relu;
    std::vector<HeadSpec> heads;  // one per task
    /// All tasks read the output of one head layer (heads must then be identical).
    bool shared_head = false;
    std::size_t rank = 1;
    double alpha = 1.0;

    std::size_t num_tasks() const noexcept { return heads.size(); }
    std::size_t input_dim() const { return encoder_dims.at(0); }
    std::size_t num_encoder_layers() const noexcept { return encoder_dims.empty() ? 0 : encoder_dims.size() - 1; }
    std::size_t num_head_layers() const noexcept { return shared_head ? 1 : heads.size(); }

    void validate() const {
        if (encoder_dims.empty()) throw std::invalid_argument("model: encoder_dims needs at least the input width");
        for (auto d : encoder_dims)
            if (d == 0) throw std::invalid_argument("model: zero layer width");
        if (heads.empty()) throw std::invalid_argument("model: need at least one task head");
        for (const auto& h : heads) {
            if (h.out_dim == 0) throw std::invalid_argument("model: zero head width");
            if (h.loss == LossKind::classification && h.out_dim < 2) {
                throw std::invalid_argument("model: classification heads need at least two classes");
            }
        }
        if (shared_head) {
            for (const auto& h : heads)
                if (!(h == heads.front())) throw std::invalid_argument("model: shared head requires identical heads");
        }
        if (rank == 0) throw std::invalid_argument("model: rank must be >= 1");
    }
    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

using ModelGradients = std::vector<LayerGradients>;

/// "encoder<i>" for encoder layers, "head<k>" for head layers.
inline std::string layer_name(const ModelSpec& spec, std::size_t i) {
    const std::size_t enc = spec.num_encoder_layers();
    return i < enc ? "encoder" + std::to_string(i) : "head" + std::to_string(i - enc);
}

/// Per-task loss value and gradient with respect to the head output.
inline LossResult task_loss(const Matrix& output, const TaskTargets& target) {
    return target.kind == LossKind::classification ? softmax_cross_entropy(output, target.labels)
                                                   : mse(output, target.values);
}

/// Sum over rows of the task metric: correct predictions, or squared error.
inline double task_metric_sum(const Matrix& output, const TaskTargets& target) {
    double sum = 0.0;
    if (target.kind == LossKind::classification) {
        for (std::size_t r = 0; r < output.rows(); ++r) {
            auto row = output.row(r);
            const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
            if (best == target.labels[r]) sum += 1.0;
        }
    } else {
        for (std::size_t r = 0; r < output.rows(); ++r) {
            double sq = 0.0;
            for (std::size_t c = 0; c < output.cols(); ++c) {
                const double d = output(r, c) - target.values(r, c);
                sq += d * d;
            }
            sum += sq / static_cast<double>(output.cols());
        }
    }
    return sum;
}

/// A network with a fixed preference folded into every layer.
struct MergedModel {
    std::vector<LinearLayer> encoder;
    std::vector<LinearLayer> heads;
    Activation activation = Activation::relu;
    std::size_t num_tasks = 0;

    std::vector<Matrix> predict(const Matrix& x) const {
        Matrix z = x;
        for (const auto& layer : encoder) {
            z = layer.forward(z);
            if (activation == Activation::relu) z = relu(z);
        }
        std::vector<Matrix> out;
        out.reserve(num_tasks);
        if (heads.size() == 1 && num_tasks > 1) {
            Matrix shared = heads.front().forward(z);
            out.assign(num_tasks, shared);
        } else {
            for (const auto& h : heads) out.push_back(h.forward(z));
        }
        return out;
    }
};

class Model {
public:
    Model() = default;

    static Model build(const ModelSpec& spec, std::uint64_t seed) {
        spec.validate();
        Model model;
        model.spec_ = spec;
        const std::size_t tasks = spec.num_tasks();
        std::uint64_t layer_index = 0;
        for (std::size_t i = 0; i < spec.num_encoder_layers(); ++i) {
            model.layers_.push_back(PaLoRALayer::init(spec.encoder_dims[i + 1], spec.encoder_dims[i], tasks,
                                                      spec.rank, spec.alpha, step_seed(seed, layer_index++)));
        }
        const std::size_t feat = spec.encoder_dims.back();
        for (std::size_t h = 0; h < spec.num_head_layers(); ++h) {
            model.layers_.push_back(PaLoRALayer::init(spec.heads[h].out_dim, feat, tasks, spec.rank, spec.alpha,
                                                      step_seed(seed, layer_index++)));
        }
        return model;
    }

    /// Reassembles a model from its spec and layers (checkpoint loading).
    static Model from_layers(const ModelSpec& spec, std::vector<PaLoRALayer> layers, std::uint64_t steps) {
        spec.validate();
        if (layers.size() != spec.num_encoder_layers() + spec.num_head_layers()) {
            throw std::invalid_argument("model: layer count does not match spec");
        }
        Model model;
        model.spec_ = spec;
        model.layers_ = std::move(layers);
        model.steps_trained_ = steps;
        model.check_layer_shapes();
        return model;
    }

    const ModelSpec& spec() const noexcept { return spec_; }
    std::size_t num_tasks() const noexcept { return spec_.num_tasks(); }
    std::span<const PaLoRALayer> layers() const noexcept { return layers_; }
    std::span<PaLoRALayer> layers() noexcept { return layers_; }
    std::span<const PaLoRALayer> encoder() const noexcept {
        return std::span<const PaLoRALayer>(layers_).first(spec_.num_encoder_layers());
    }
    std::span<const PaLoRALayer> heads() const noexcept {
        return std::span<const PaLoRALayer>(layers_).subspan(spec_.num_encoder_layers());
    }

    std::uint64_t steps_trained() const noexcept { return steps_trained_; }
    void set_steps_trained(std::uint64_t s) noexcept { steps_trained_ = s; }

    /// Name of layer i as used by checkpoints.
    std::string layer_name(std::size_t i) const { return palora::layer_name(spec_, i); }

    void set_base_frozen(bool frozen) {
        for (auto& l : layers_) l.set_base_frozen(frozen);
    }
    void set_adapters_frozen(bool frozen) {
        for (auto& l : layers_) l.set_adapters_frozen(frozen);
    }
    /// Fresh adapters (A Gaussian, B zero) in every layer; outputs revert to the base network.
    void reset_adapters(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& l : layers_) l.reset_adapters(rng);
    }

    ParamCount param_count() const noexcept {
        ParamCount total;
        for (const auto& l : layers_) {
            const auto c = l.param_count();
            total.base += c.base;
            total.bias += c.bias;
            total.adapters += c.adapters;
        }
        return total;
    }

    struct Trace {
        std::vector<Matrix> inputs;  // input of every encoder layer, then the encoder output
        std::vector<Matrix> pre;     // encoder pre-activations
        std::vector<Matrix> outputs; // one per task
    };

    Trace forward_trace(std::span<const double> lambda, const Matrix& x) const {
        check_lambda(lambda);
        Trace tr;
        tr.inputs.push_back(x);
        for (std::size_t i = 0; i < spec_.num_encoder_layers(); ++i) {
            tr.pre.push_back(layers_[i].forward(lambda, tr.inputs.back()));
            tr.inputs.push_back(spec_.activation == Activation::relu ? relu(tr.pre.back()) : tr.pre.back());
        }
        const Matrix& z = tr.inputs.back();
        if (spec_.shared_head) {
            Matrix shared = heads().front().forward(lambda, z);
            tr.outputs.assign(num_tasks(), shared);
        } else {
            for (const auto& h : heads()) tr.outputs.push_back(h.forward(lambda, z));
        }
        return tr;
    }

    std::vector<Matrix> forward(std::span<const double> lambda, const Matrix& x) const {
        return forward_trace(lambda, x).outputs;
    }

    /// Gradients of the model given dLoss/d(task output) for every task.
    ModelGradients backward(std::span<const double> lambda, const Trace& tr,
                            const std::vector<Matrix>& output_grads) const {
        ModelGradients grads(layers_.size());
        const std::size_t enc = spec_.num_encoder_layers();
        const Matrix& z = tr.inputs.back();
        Matrix dz;
        const bool need_dz = enc > 0;
        if (spec_.shared_head) {
            Matrix up = output_grads.front();
            for (std::size_t t = 1; t < output_grads.size(); ++t) up += output_grads[t];
            auto r = layers_[enc].backward(lambda, z, up, need_dz);
            grads[enc] = std::move(r.grads);
            dz = std::move(r.dx);
        } else {
            for (std::size_t t = 0; t < num_tasks(); ++t) {
                auto r = layers_[enc + t].backward(lambda, z, output_grads[t], need_dz);
                grads[enc + t] = std::move(r.grads);
                if (!need_dz) continue;
                if (dz.empty()) dz = std::move(r.dx);
                else dz += r.dx;
            }
        }
        for (std::size_t i = enc; i-- > 0;) {
            const Matrix up = spec_.activation == Activation::relu ? relu_backward(tr.pre[i], dz) : dz;
            auto r = layers_[i].backward(lambda, tr.inputs[i], up, i > 0);
            grads[i] = std::move(r.grads);
            dz = std::move(r.dx);
        }
        return grads;
    }

    MergedModel merge(std::span<const double> lambda) const {
        check_lambda(lambda);
        MergedModel m;
        m.activation = spec_.activation;
        m.num_tasks = num_tasks();
        for (const auto& l : encoder()) m.encoder.push_back(l.merge(lambda));
        for (const auto& l : heads()) m.heads.push_back(l.merge(lambda));
        return m;
    }

    /// The base network with every adapter removed.
    MergedModel base_only() const {
        MergedModel m;
        m.activation = spec_.activation;
        m.num_tasks = num_tasks();
        for (const auto& l : encoder()) m.encoder.push_back({l.weight(), l.bias()});
        for (const auto& l : heads()) m.heads.push_back({l.weight(), l.bias()});
        return m;
    }

    friend bool operator==(const Model& a, const Model& b) {
        return a.spec_ == b.spec_ && a.layers_ == b.layers_ && a.steps_trained_ == b.steps_trained_;
    }

private:
    void check_lambda(std::span<const double> lambda) const {
        if (lambda.size() != num_tasks()) {
            throw ShapeError("model: preference of length " + std::to_string(lambda.size()) + " for " +
                             std::to_string(num_tasks()) + " tasks");
        }
    }
    void check_layer_shapes() const {
        const std::size_t enc = spec_.num_encoder_layers();
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            const std::size_t in = i < enc ? spec_.encoder_dims[i] : spec_.encoder_dims.back();
            const std::size_t out = i < enc ? spec_.encoder_dims[i + 1] : spec_.heads[i - enc].out_dim;
            if (l.in_features() != in || l.out_features() != out || l.num_tasks() != num_tasks() ||
                l.rank() != spec_.rank || l.alpha() != spec_.alpha) {
                throw ShapeError("model: layer " + layer_name(i) + " does not match spec");
            }
        }
    }

    ModelSpec spec_;
    std::vector<PaLoRALayer> layers_;
    std::uint64_t steps_trained_ = 0;
};

}  // namespace palora
