// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Preference vectors and the per-batch preference schedules: evenly spaced
// base grids on the simplex, temperature annealing of those grids, a
// symmetric Dirichlet sampler, and fixed-preference scalarization.

#pragma once

#include "palora/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace palora {

class PreferenceVector {
public:
    PreferenceVector() = default;
    explicit PreferenceVector(std::vector<double> weights) : weights_(std::move(weights)) {}
    PreferenceVector(std::initializer_list<double> weights) : weights_(weights) {}

    static PreferenceVector uniform(std::size_t tasks) {
        return PreferenceVector(std::vector<double>(tasks, 1.0 / static_cast<double>(tasks)));
    }

    std::size_t size() const noexcept { return weights_.size(); }
    double operator[](std::size_t t) const noexcept { return weights_[t]; }
    double& operator[](std::size_t t) noexcept { return weights_[t]; }
    std::span<const double> weights() const noexcept { return weights_; }
    operator std::span<const double>() const noexcept { return weights_; }

    /// Nonnegative and summing to one within tol.
    bool on_simplex(double tol = 1e-9) const noexcept {
        if (weights_.empty()) return false;
        double sum = 0.0;
        for (double w : weights_) {
            if (!(w >= -tol)) return false;
            sum += w;
        }
        return std::abs(sum - 1.0) <= tol;
    }

    friend bool operator==(const PreferenceVector&, const PreferenceVector&) = default;

private:
    std::vector<double> weights_;
};

using PreferenceSet = std::vector<PreferenceVector>;

enum class SamplingMode { deterministic, dirichlet, fixed };

inline std::string to_string(SamplingMode mode) {
    switch (mode) {
    case SamplingMode::deterministic: return "deterministic";
    case SamplingMode::dirichlet: return "dirichlet";
    case SamplingMode::fixed: return "fixed";
    }
    return "unknown";
}

inline SamplingMode sampling_mode_from_string(const std::string& name) {
    if (name == "deterministic") return SamplingMode::deterministic;
    if (name == "dirichlet") return SamplingMode::dirichlet;
    if (name == "fixed") return SamplingMode::fixed;
    throw std::invalid_argument("unknown sampling mode '" + name + "'");
}

struct ScheduleConfig {
    std::size_t num_tasks = 2;
    std::size_t samples_per_batch = 5;
    SamplingMode mode = SamplingMode::deterministic;
    bool annealed = true;
    double temperature = 1.0;    // T_max, deterministic mode
    double concentration = 1.0;  // p, dirichlet mode
    std::uint64_t seed = 0;
    /// Training preference for SamplingMode::fixed (linear scalarization).
    std::vector<double> fixed_preference;

    void validate() const {
        if (num_tasks < 1) throw std::invalid_argument("schedule: num_tasks must be >= 1");
        if (samples_per_batch < 1) throw std::invalid_argument("schedule: samples_per_batch must be >= 1");
        if (!(temperature > 0.0)) throw std::invalid_argument("schedule: temperature must be > 0");
        if (!(concentration > 0.0)) throw std::invalid_argument("schedule: concentration must be > 0");
        if (mode == SamplingMode::fixed) {
            PreferenceVector p(fixed_preference);
            if (p.size() != num_tasks || !p.on_simplex()) {
                throw std::invalid_argument("schedule: fixed_preference must be a simplex point of length num_tasks");
            }
        }
    }
};

/// Smallest Dirichlet concentration used by the annealed sampler.
inline constexpr double kMinConcentration = 1e-3;

/// Number of points of the 3-task lattice with n subdivisions.
inline constexpr std::size_t triangular_lattice_size(std::size_t n) { return (n + 1) * (n + 2) / 2; }

/// Evenly spaced points on the simplex. T=2: (i/(m-1), 1 - i/(m-1)). T=3: the
/// lattice {(i, j, k)/n : i + j + k = n} in lexicographic order, m = C(n+2, 2).
inline PreferenceSet base_grid(std::size_t tasks, std::size_t m) {
    PreferenceSet out;
    if (tasks == 2) {
        if (m < 2) throw std::invalid_argument("base_grid: T=2 needs m >= 2");
        out.reserve(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double l = static_cast<double>(i) / static_cast<double>(m - 1);
            out.push_back({l, 1.0 - l});
        }
        return out;
    }
    if (tasks == 3) {
        std::size_t n = 1;
        while (triangular_lattice_size(n) < m) ++n;
        if (triangular_lattice_size(n) != m) {
            throw std::invalid_argument("base_grid: T=3 needs a triangular lattice size (3, 6, 10, 15, ...), got " +
                                        std::to_string(m));
        }
        const double nd = static_cast<double>(n);
        for (std::size_t i = 0; i <= n; ++i) {
            for (std::size_t j = 0; i + j <= n; ++j) {
                const std::size_t k = n - i - j;
                out.push_back({static_cast<double>(i) / nd, static_cast<double>(j) / nd, static_cast<double>(k) / nd});
            }
        }
        return out;
    }
    throw std::invalid_argument("base_grid: only 2 or 3 tasks are supported, got " + std::to_string(tasks));
}

/// Evaluation grid; same construction as the base grid (K = 11 is the usual 2-task
/// choice). K = 1 is the uniform preference alone.
inline PreferenceSet eval_grid(std::size_t tasks, std::size_t k) {
    if (k == 1) return {PreferenceVector::uniform(tasks)};
    return base_grid(tasks, k);
}

/// lambda_t^(tau / T_max), renormalized; 0^0 is taken as 1 so tau = 0 gives the uniform vector.
inline PreferenceSet anneal(const PreferenceSet& base, double tau, double temperature) {
    const double exponent = tau / temperature;
    // Identity map; skipping the renormalization keeps grid points bit-exact.
    if (exponent == 1.0) return base;
    PreferenceSet out;
    out.reserve(base.size());
    for (const auto& p : base) {
        std::vector<double> w(p.size());
        double sum = 0.0;
        for (std::size_t t = 0; t < p.size(); ++t) {
            w[t] = exponent == 0.0 ? 1.0 : std::pow(p[t], exponent);
            sum += w[t];
        }
        for (double& v : w) v /= sum;
        out.emplace_back(std::move(w));
    }
    return out;
}

/// m i.i.d. draws from the symmetric Dirichlet(concentration * 1).
inline PreferenceSet sample_dirichlet(std::size_t tasks, std::size_t m, double concentration, Rng& rng) {
    if (!(concentration > 0.0)) throw std::invalid_argument("sample_dirichlet: concentration must be > 0");
    if (tasks < 1) throw std::invalid_argument("sample_dirichlet: need at least one task");
    PreferenceSet out;
    out.reserve(m);
    std::vector<double> logs(tasks);
    for (std::size_t j = 0; j < m; ++j) {
        for (double& l : logs) l = rng.log_gamma(concentration);
        const double top = *std::max_element(logs.begin(), logs.end());
        std::vector<double> w(tasks);
        double sum = 0.0;
        for (std::size_t t = 0; t < tasks; ++t) {
            w[t] = std::exp(logs[t] - top);
            sum += w[t];
        }
        for (double& v : w) v /= sum;
        out.emplace_back(std::move(w));
    }
    return out;
}

/// tau = step / (total_steps - 1), or 0 for single-step runs.
inline double schedule_time(std::size_t step, std::size_t total_steps) {
    if (total_steps == 0 || step >= total_steps) {
        throw std::out_of_range("schedule: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + ")");
    }
    return total_steps == 1 ? 0.0 : static_cast<double>(step) / static_cast<double>(total_steps - 1);
}

/// Generator seed for the Dirichlet draws of one optimizer step.
inline std::uint64_t step_seed(std::uint64_t seed, std::size_t step) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(step) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// The m training preferences for one optimizer step. A pure function of
/// (config, step, total_steps): Dirichlet draws come from a generator seeded by
/// step_seed(config.seed, step).
inline PreferenceSet preferences_for_step(const ScheduleConfig& config, std::size_t step, std::size_t total_steps) {
    config.validate();
    const double tau = schedule_time(step, total_steps);
    switch (config.mode) {
    case SamplingMode::deterministic:
        return anneal(base_grid(config.num_tasks, config.samples_per_batch), config.annealed ? tau : 1.0,
                      config.temperature);
    case SamplingMode::dirichlet: {
        const double c = config.annealed ? std::max(config.concentration * (1.0 - tau), kMinConcentration)
                                         : config.concentration;
        Rng rng(step_seed(config.seed, step));
        return sample_dirichlet(config.num_tasks, config.samples_per_batch, c, rng);
    }
    case SamplingMode::fixed:
        return PreferenceSet(config.samples_per_batch, PreferenceVector(config.fixed_preference));
    }
    return {};
}

}  // namespace palora
