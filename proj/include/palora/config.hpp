// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON run configuration: model, training, data source and output directory.

#pragma once

#include "palora/dataset.hpp"
#include "palora/model.hpp"
#include "palora/trainer.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace palora {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DataKind { synthetic, multimnist };

struct DataConfig {
    DataKind kind = DataKind::synthetic;
    std::uint64_t seed = 0;
    // synthetic
    std::size_t dim = 8;
    std::size_t samples = 2000;
    double noise = 0.01;
    std::uint64_t anchor_seed = 7;
    std::vector<double> a;  // explicit anchors override anchor_seed
    std::vector<double> b;
    double val_fraction = 0.2;
    // multimnist
    std::string images = "mnist/images-idx3-ubyte.gz";
    std::string labels = "mnist/labels-idx1-ubyte.gz";
    std::size_t n_train = 10000;
    std::size_t n_val = 2000;
    double val_digit_fraction = 0.2;
};

struct RunConfig {
    std::uint64_t seed = 0;
    ModelSpec model;
    TrainConfig train;
    DataConfig data;
    std::string output_dir = "run";
};

// ---------------------------------------------------------------------------
// struct -> json

inline json to_json(const ModelSpec& s) {
    json heads = json::array();
    for (const auto& h : s.heads) heads.push_back({{"out_dim", h.out_dim}, {"loss", to_string(h.loss)}});
    return {{"encoder_dims", s.encoder_dims}, {"activation", to_string(s.activation)}, {"heads", heads},
            {"shared_head", s.shared_head},   {"rank", s.rank},                        {"alpha", s.alpha}};
}

inline json to_json(const ScheduleConfig& s) {
    json j = {{"samples_per_batch", s.samples_per_batch},
              {"mode", to_string(s.mode)},
              {"annealed", s.annealed},
              {"temperature", s.temperature},
              {"concentration", s.concentration},
              {"seed", s.seed}};
    if (!s.fixed_preference.empty()) j["fixed_preference"] = s.fixed_preference;
    return j;
}

inline json to_json(const TrainConfig& c) {
    json opt = {{"kind", c.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
                {"learning_rate", c.optimizer.learning_rate},
                {"beta1", c.optimizer.beta1},
                {"beta2", c.optimizer.beta2},
                {"epsilon", c.optimizer.epsilon},
                {"momentum", c.optimizer.momentum}};
    return {{"seed", c.seed},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"optimizer", opt},
            {"schedule", to_json(c.schedule)},
            {"mode", c.mode == TrainMode::expand ? "expand" : "scratch"},
            {"hv_reference", c.hv_reference},
            {"eval_grid_size", c.eval_grid_size}};
}

inline json to_json(const DataConfig& d) {
    json j = {{"kind", d.kind == DataKind::synthetic ? "synthetic" : "multimnist"}, {"seed", d.seed}};
    if (d.kind == DataKind::synthetic) {
        j.update({{"dim", d.dim},
                  {"samples", d.samples},
                  {"noise", d.noise},
                  {"anchor_seed", d.anchor_seed},
                  {"val_fraction", d.val_fraction}});
        if (!d.a.empty()) j.update({{"a", d.a}, {"b", d.b}});
    } else {
        j.update({{"images", d.images},
                  {"labels", d.labels},
                  {"n_train", d.n_train},
                  {"n_val", d.n_val},
                  {"val_digit_fraction", d.val_digit_fraction}});
    }
    return j;
}

inline json to_json(const RunConfig& c) {
    return {{"seed", c.seed},
            {"model", to_json(c.model)},
            {"train", to_json(c.train)},
            {"data", to_json(c.data)},
            {"outputs", {{"directory", c.output_dir}}}};
}

// ---------------------------------------------------------------------------
// json -> struct

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace detail

inline ModelSpec model_spec_from_json(const json& j) {
    ModelSpec s;
    s.encoder_dims = j.at("encoder_dims").get<std::vector<std::size_t>>();
    s.activation = activation_from_string(detail::get_or<std::string>(j, "activation", "relu"));
    for (const auto& h : j.at("heads")) {
        s.heads.push_back({h.at("out_dim").get<std::size_t>(),
                           loss_kind_from_string(detail::get_or<std::string>(h, "loss", "classification"))});
    }
    s.shared_head = detail::get_or(j, "shared_head", false);
    s.rank = detail::get_or<std::size_t>(j, "rank", 1);
    s.alpha = detail::get_or(j, "alpha", 1.0);
    return s;
}

inline ScheduleConfig schedule_from_json(const json& j, std::size_t tasks, std::uint64_t seed) {
    ScheduleConfig s;
    s.num_tasks = tasks;
    s.samples_per_batch = detail::get_or<std::size_t>(j, "samples_per_batch", s.samples_per_batch);
    s.mode = sampling_mode_from_string(detail::get_or<std::string>(j, "mode", "deterministic"));
    s.annealed = detail::get_or(j, "annealed", s.annealed);
    s.temperature = detail::get_or(j, "temperature", s.temperature);
    s.concentration = detail::get_or(j, "concentration", s.concentration);
    s.seed = detail::get_or<std::uint64_t>(j, "seed", seed);
    s.fixed_preference = detail::get_or(j, "fixed_preference", std::vector<double>{});
    return s;
}

inline TrainConfig train_config_from_json(const json& j, std::size_t tasks, std::uint64_t seed) {
    TrainConfig c;
    c.seed = detail::get_or<std::uint64_t>(j, "seed", seed);
    c.epochs = detail::get_or<std::size_t>(j, "epochs", c.epochs);
    c.batch_size = detail::get_or<std::size_t>(j, "batch_size", c.batch_size);
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        const auto kind = detail::get_or<std::string>(o, "kind", "adam");
        if (kind != "adam" && kind != "sgd") throw ConfigError("optimizer.kind must be adam or sgd");
        c.optimizer.kind = kind == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
        c.optimizer.learning_rate = detail::get_or(o, "learning_rate", c.optimizer.learning_rate);
        c.optimizer.beta1 = detail::get_or(o, "beta1", c.optimizer.beta1);
        c.optimizer.beta2 = detail::get_or(o, "beta2", c.optimizer.beta2);
        c.optimizer.epsilon = detail::get_or(o, "epsilon", c.optimizer.epsilon);
        c.optimizer.momentum = detail::get_or(o, "momentum", c.optimizer.momentum);
    }
    c.schedule = schedule_from_json(j.value("schedule", json::object()), tasks, seed);
    const auto mode = detail::get_or<std::string>(j, "mode", "scratch");
    if (mode != "scratch" && mode != "expand") throw ConfigError("train.mode must be scratch or expand");
    c.mode = mode == "expand" ? TrainMode::expand : TrainMode::scratch;
    c.hv_reference = detail::get_or(j, "hv_reference", ObjectivePoint{});
    c.eval_grid_size = detail::get_or<std::size_t>(j, "eval_grid_size", c.eval_grid_size);
    return c;
}

inline DataConfig data_config_from_json(const json& j) {
    DataConfig d;
    const auto kind = detail::get_or<std::string>(j, "kind", "synthetic");
    if (kind != "synthetic" && kind != "multimnist") throw ConfigError("data.kind must be synthetic or multimnist");
    d.kind = kind == "synthetic" ? DataKind::synthetic : DataKind::multimnist;
    d.seed = detail::get_or<std::uint64_t>(j, "seed", d.seed);
    d.dim = detail::get_or<std::size_t>(j, "dim", d.dim);
    d.samples = detail::get_or<std::size_t>(j, "samples", d.samples);
    d.noise = detail::get_or(j, "noise", d.noise);
    d.anchor_seed = detail::get_or<std::uint64_t>(j, "anchor_seed", d.anchor_seed);
    d.a = detail::get_or(j, "a", std::vector<double>{});
    d.b = detail::get_or(j, "b", std::vector<double>{});
    d.val_fraction = detail::get_or(j, "val_fraction", d.val_fraction);
    d.images = detail::get_or(j, "images", d.images);
    d.labels = detail::get_or(j, "labels", d.labels);
    d.n_train = detail::get_or<std::size_t>(j, "n_train", d.n_train);
    d.n_val = detail::get_or<std::size_t>(j, "n_val", d.n_val);
    d.val_digit_fraction = detail::get_or(j, "val_digit_fraction", d.val_digit_fraction);
    return d;
}

/// Resolves a dataset path: absolute paths as given, relative ones under
/// $PALORA_DATA_DIR when it is set, else relative to the working directory.
inline std::string resolve_data_path(const std::string& path) {
    const std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    if (const char* root = std::getenv("PALORA_DATA_DIR"); root != nullptr && *root != '\0') {
        return (std::filesystem::path(root) / p).string();
    }
    return path;
}

/// Parses and validates a run configuration. Every failure is a ConfigError.
inline RunConfig run_config_from_json(const json& j) {
    try {
        RunConfig c;
        if (!j.contains("seed")) throw ConfigError("config: 'seed' is mandatory");
        c.seed = j.at("seed").get<std::uint64_t>();
        c.model = model_spec_from_json(j.at("model"));
        c.model.validate();
        c.train = train_config_from_json(j.value("train", json::object()), c.model.num_tasks(), c.seed);
        c.train.validate();
        c.data = data_config_from_json(j.value("data", json::object()));
        if (j.contains("outputs")) c.output_dir = detail::get_or<std::string>(j.at("outputs"), "directory", c.output_dir);
        if (c.data.kind == DataKind::multimnist) {
            for (const auto& path : {c.data.images, c.data.labels}) {
                if (!std::filesystem::exists(resolve_data_path(path))) {
                    throw ConfigError("config: data file '" + resolve_data_path(path) + "' does not exist");
                }
            }
            if (c.model.num_tasks() != 2) throw ConfigError("config: multimnist has exactly two tasks");
        } else if (c.model.num_tasks() != 2) {
            throw ConfigError("config: the synthetic problem has exactly two tasks");
        }
        return c;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
}

inline RunConfig load_run_config(const std::string& path) { return run_config_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Dataset materialization

struct DataSplits {
    LabeledDataset train;
    LabeledDataset val;
    std::optional<SyntheticProblem> problem;  // set for the synthetic source
};

inline SyntheticProblem synthetic_problem_of(const DataConfig& d) {
    SyntheticProblem p = make_synthetic_problem(d.dim, d.samples, d.noise, d.anchor_seed);
    if (!d.a.empty()) {
        p.a = d.a;
        p.b = d.b;
    }
    p.validate();
    return p;
}

inline DataSplits load_data(const DataConfig& d) {
    DataSplits out;
    if (d.kind == DataKind::synthetic) {
        out.problem = synthetic_problem_of(d);
        auto all = synthetic_two_objective(*out.problem, d.seed);
        std::tie(out.train, out.val) = train_val_split(all, d.val_fraction, step_seed(d.seed, 1));
        return out;
    }
    const auto images = load_idx(resolve_data_path(d.images));
    const auto labels = load_idx(resolve_data_path(d.labels));
    const auto [train_pool, val_pool] = split_digits(images, labels, d.val_digit_fraction, d.seed);
    out.train = build_multimnist(train_pool.first, train_pool.second, d.n_train, step_seed(d.seed, 1));
    out.val = build_multimnist(val_pool.first, val_pool.second, d.n_val, step_seed(d.seed, 2));
    return out;
}

}  // namespace palora
