// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scalarized multi-preference training, Pareto expansion, front evaluation and
// pseudopreference probing.

#pragma once

#include "palora/dataset.hpp"
#include "palora/metrics.hpp"
#include "palora/model.hpp"
#include "palora/preferences.hpp"
#include "palora/random.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace palora {

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double momentum = 0.0;  // sgd
};

enum class TrainMode { scratch, expand };

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    OptimizerConfig optimizer;
    ScheduleConfig schedule;
    TrainMode mode = TrainMode::scratch;
    std::uint64_t seed = 0;
    /// Reference point for validation hypervolume; empty selects 1.2 x the
    /// componentwise maximum loss of the evaluated front.
    ObjectivePoint hv_reference;
    std::size_t eval_grid_size = 11;

    void validate() const {
        if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
        if (!(optimizer.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
        schedule.validate();
    }
};

struct HistoryRow {
    std::size_t epoch = 0;
    double mean_scalarized_loss = 0.0;
    ObjectivePoint uniform_losses;  // validation losses at the uniform preference
    double val_hv = 0.0;
    ObjectivePoint hv_reference;
    std::vector<double> alignment;  // per-task Spearman rho over the eval grid
};

using TrainHistory = std::vector<HistoryRow>;

/// Adam or SGD(momentum) over every trainable block of a model.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config) : config_(config) {}

    void step(Model& model, const ModelGradients& grads) {
        ++steps_;
        std::size_t slot = 0;
        auto layers = model.layers();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            auto& layer = layers[i];
            const auto& g = grads[i];
            const bool base = !layer.base_frozen();
            const bool adapters = !layer.adapters_frozen();
            update(layer.weight(), g.weight, slot++, base);
            update(layer.bias(), g.bias, slot++, base);
            for (std::size_t t = 0; t < layer.num_tasks(); ++t) {
                update(layer.adapters()[t].a, g.a[t], slot++, adapters);
                update(layer.adapters()[t].b, g.b[t], slot++, adapters);
            }
        }
    }

    const OptimizerConfig& config() const noexcept { return config_; }

private:
    void update(Matrix& param, const Matrix& grad, std::size_t slot, bool trainable) {
        if (slot >= first_.size()) {
            first_.resize(slot + 1);
            second_.resize(slot + 1);
        }
        if (!trainable) return;
        if (first_[slot].empty()) first_[slot] = Matrix(param.rows(), param.cols());
        auto p = param.values();
        auto g = grad.values();
        auto m = first_[slot].values();
        const double lr = config_.learning_rate;
        if (config_.kind == OptimizerKind::sgd) {
            for (std::size_t k = 0; k < p.size(); ++k) {
                m[k] = config_.momentum * m[k] + g[k];
                p[k] -= lr * m[k];
            }
            return;
        }
        if (second_[slot].empty()) second_[slot] = Matrix(param.rows(), param.cols());
        auto v = second_[slot].values();
        const double b1 = config_.beta1, b2 = config_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
        }
    }

    OptimizerConfig config_;
    std::uint64_t steps_ = 0;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
};

struct StepResult {
    ModelGradients grads;                     // mean over the preferences
    std::vector<ObjectivePoint> task_losses;  // per preference
};

/// For every preference: forward, per-task losses, backprop of lambda^T L. The
/// gradients are summed over preferences and divided by their count.
inline StepResult compute_gradients(const Model& model, const Batch& batch, const PreferenceSet& preferences) {
    if (preferences.empty()) throw std::invalid_argument("train_step: no preferences");
    if (batch.num_tasks() != model.num_tasks()) throw std::invalid_argument("train_step: task count mismatch");
    StepResult out;
    for (const auto& lambda : preferences) {
        const auto trace = model.forward_trace(lambda, batch.inputs);
        ObjectivePoint losses(model.num_tasks());
        std::vector<Matrix> output_grads;
        output_grads.reserve(model.num_tasks());
        for (std::size_t t = 0; t < model.num_tasks(); ++t) {
            auto l = task_loss(trace.outputs[t], batch.targets[t]);
            if (!std::isfinite(l.loss)) {
                throw TrainingDiverged("non-finite loss for task " + std::to_string(t) + " (" +
                                       std::to_string(l.loss) + ")");
            }
            losses[t] = l.loss;
            output_grads.push_back(std::move(l.grad *= lambda[t]));
        }
        auto grads = model.backward(lambda, trace, output_grads);
        if (out.grads.empty()) {
            out.grads = std::move(grads);
        } else {
            for (std::size_t i = 0; i < grads.size(); ++i) out.grads[i] += grads[i];
        }
        out.task_losses.push_back(std::move(losses));
    }
    const double inv = 1.0 / static_cast<double>(preferences.size());
    for (auto& g : out.grads) g *= inv;
    return out;
}

/// One optimizer update from the preference-averaged gradient.
inline std::vector<ObjectivePoint> train_step(Model& model, Optimizer& optimizer, const Batch& batch,
                                              const PreferenceSet& preferences) {
    auto r = compute_gradients(model, batch, preferences);
    optimizer.step(model, r.grads);
    model.set_steps_trained(model.steps_trained() + 1);
    return std::move(r.task_losses);
}

/// Losses and metrics of one preference over a whole dataset. No simplex check.
inline FrontRecord evaluate_preference(const Model& model, const LabeledDataset& data, const PreferenceVector& lambda,
                                       std::size_t chunk = 2048) {
    if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
    const auto merged = model.merge(lambda);
    const std::size_t tasks = model.num_tasks();
    FrontRecord rec{lambda, ObjectivePoint(tasks, 0.0), std::vector<double>(tasks, 0.0)};
    for (std::size_t first = 0; first < data.size(); first += chunk) {
        const std::size_t count = std::min(chunk, data.size() - first);
        const auto part = data.slice(first, count);
        const auto outputs = merged.predict(part.inputs);
        for (std::size_t t = 0; t < tasks; ++t) {
            rec.losses[t] += task_loss(outputs[t], part.targets[t]).loss * static_cast<double>(count);
            rec.metrics[t] += task_metric_sum(outputs[t], part.targets[t]);
        }
    }
    const double n = static_cast<double>(data.size());
    for (std::size_t t = 0; t < tasks; ++t) {
        rec.losses[t] /= n;
        rec.metrics[t] /= n;
    }
    return rec;
}

/// Evaluates the merged model at every grid preference; preferences must lie on the simplex.
inline std::vector<FrontRecord> evaluate_front(const Model& model, const LabeledDataset& data,
                                               const PreferenceSet& grid) {
    std::vector<FrontRecord> out;
    out.reserve(grid.size());
    for (const auto& lambda : grid) {
        if (!lambda.on_simplex()) throw std::invalid_argument("evaluate_front: preference off the simplex");
        out.push_back(evaluate_preference(model, data, lambda));
    }
    return out;
}

/// evaluate_front for arbitrary (pseudo)preferences.
inline std::vector<FrontRecord> probe(const Model& model, const LabeledDataset& data, const PreferenceSet& pseudo) {
    std::vector<FrontRecord> out;
    out.reserve(pseudo.size());
    for (const auto& lambda : pseudo) out.push_back(evaluate_preference(model, data, lambda));
    return out;
}

/// 1.2 x the componentwise maximum loss of a front.
inline ObjectivePoint auto_reference(const std::vector<FrontRecord>& front) {
    ObjectivePoint ref(front.at(0).losses.size(), 0.0);
    for (const auto& rec : front)
        for (std::size_t t = 0; t < ref.size(); ++t) ref[t] = std::max(ref[t], rec.losses[t]);
    for (auto& r : ref) r *= 1.2;
    return ref;
}

struct FrontSummary {
    double hv = 0.0;
    ObjectivePoint reference;
    std::vector<double> alignment;
    std::size_t nondominated = 0;
};

inline FrontSummary summarize_front(const std::vector<FrontRecord>& front, const ObjectivePoint& reference) {
    FrontSummary s;
    s.reference = reference.empty() ? auto_reference(front) : reference;
    const auto pts = losses_of(front);
    s.hv = pts.front().size() <= 3 && pts.front().size() >= 2 ? hypervolume(pts, s.reference) : 0.0;
    s.nondominated = nondominated_filter(pts).size();
    bool distinct = false;
    for (const auto& r : front) distinct = distinct || !(r.preference == front.front().preference);
    s.alignment = distinct ? pareto_alignment(front) : std::vector<double>(front.front().losses.size(), 0.0);
    return s;
}

namespace detail {

inline std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) {
    return (n + batch_size - 1) / batch_size;
}

}  // namespace detail

/// Epochs of seeded-shuffle mini-batches; the preference schedule advances once
/// per optimizer step. Validation front metrics are recorded after every epoch.
inline TrainHistory train(Model& model, const LabeledDataset& train_set, const LabeledDataset& val_set,
                          const TrainConfig& config) {
    config.validate();
    if (config.schedule.num_tasks != model.num_tasks()) {
        throw std::invalid_argument("train: schedule task count differs from the model's");
    }
    if (train_set.num_tasks() != model.num_tasks() || val_set.num_tasks() != model.num_tasks()) {
        throw std::invalid_argument("train: dataset task count differs from the model's");
    }
    TrainHistory history;
    if (config.epochs == 0) return history;
    // Scalarization trains the base network only; expansion trains adapters only.
    model.set_base_frozen(config.mode == TrainMode::expand);
    model.set_adapters_frozen(config.mode == TrainMode::scratch && config.schedule.mode == SamplingMode::fixed);
    const std::size_t per_epoch = detail::batches_per_epoch(train_set.size(), config.batch_size);
    const std::size_t total_steps = config.epochs * per_epoch;
    const auto grid = eval_grid(model.num_tasks(), config.eval_grid_size);
    Optimizer optimizer(config.optimizer);
    std::vector<std::size_t> order(train_set.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(step_seed(config.seed, epoch));
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double scalarized = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            const std::size_t first = b * config.batch_size;
            const std::size_t count = std::min(config.batch_size, train_set.size() - first);
            const auto batch = train_set.subset(std::span<const std::size_t>(order).subspan(first, count));
            const auto prefs = preferences_for_step(config.schedule, step, total_steps);
            const auto losses = train_step(model, optimizer, batch, prefs);
            double batch_mean = 0.0;
            for (std::size_t j = 0; j < prefs.size(); ++j)
                for (std::size_t t = 0; t < model.num_tasks(); ++t) batch_mean += prefs[j][t] * losses[j][t];
            scalarized += batch_mean / static_cast<double>(prefs.size());
        }
        HistoryRow row;
        row.epoch = epoch + 1;
        row.mean_scalarized_loss = scalarized / static_cast<double>(per_epoch);
        row.uniform_losses = evaluate_preference(model, val_set, PreferenceVector::uniform(model.num_tasks())).losses;
        const auto front = evaluate_front(model, val_set, grid);
        const auto summary = summarize_front(front, config.hv_reference);
        row.val_hv = summary.hv;
        row.hv_reference = summary.reference;
        row.alignment = summary.alignment;
        history.push_back(std::move(row));
    }
    return history;
}

struct ExpansionResult {
    Model model;
    TrainHistory history;
};

/// Adapter-only fine-tuning around a trained checkpoint: adapters are reset
/// (so the starting point is exactly the checkpoint), the base is frozen.
inline ExpansionResult expand(const Model& checkpoint, const LabeledDataset& train_set, const LabeledDataset& val_set,
                              TrainConfig config) {
    if (config.mode != TrainMode::expand) throw std::invalid_argument("expand: config.mode must be expand");
    ExpansionResult out{checkpoint, {}};
    out.model.reset_adapters(step_seed(config.seed, 0xADA97E5ULL));
    out.history = train(out.model, train_set, val_set, config);
    return out;
}

}  // namespace palora
