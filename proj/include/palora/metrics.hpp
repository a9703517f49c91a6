// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-objective evaluation for minimization problems: Pareto dominance,
// nondominated filtering, exact hypervolume (2 and 3 objectives) with a Monte
// Carlo cross-check, Spearman rank correlation and front alignment.

#pragma once

#include "palora/preferences.hpp"
#include "palora/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace palora {

using ObjectivePoint = std::vector<double>;

/// One evaluated point of a front.
struct FrontRecord {
    PreferenceVector preference;
    ObjectivePoint losses;
    std::vector<double> metrics;  // accuracy for classification, MSE for regression
};

/// a dominates b: no worse in every objective and not equal.
inline bool dominates(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("dominates: objective counts differ (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    }
    bool strictly_better = false;
    for (std::size_t t = 0; t < a.size(); ++t) {
        if (a[t] > b[t]) return false;
        if (a[t] < b[t]) strictly_better = true;
    }
    return strictly_better;
}

/// Indices (ascending) of points no other point dominates. Equal points are all kept.
inline std::vector<std::size_t> nondominated_filter(const std::vector<ObjectivePoint>& points) {
    if (points.empty()) throw std::invalid_argument("nondominated_filter: empty input");
    // Lexicographic order: a point can only be dominated by one sorted before it.
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return points[i] < points[j]; });
    std::vector<std::size_t> front;
    for (std::size_t i : order) {
        const bool dominated = std::any_of(front.begin(), front.end(),
                                           [&](std::size_t j) { return dominates(points[j], points[i]); });
        if (!dominated) front.push_back(i);
    }
    std::sort(front.begin(), front.end());
    return front;
}

namespace detail {

inline void check_reference(std::span<const double> ref) {
    if (ref.size() != 2 && ref.size() != 3) {
        throw std::invalid_argument("hypervolume: only 2 or 3 objectives are supported, got " +
                                    std::to_string(ref.size()));
    }
    for (double r : ref) {
        if (!std::isfinite(r)) throw std::invalid_argument("hypervolume: reference point must be finite");
    }
}

/// Points strictly better than ref in every coordinate.
inline std::vector<ObjectivePoint> clip_to_reference(const std::vector<ObjectivePoint>& points,
                                                     std::span<const double> ref) {
    std::vector<ObjectivePoint> kept;
    for (const auto& p : points) {
        if (p.size() != ref.size()) {
            throw std::invalid_argument("hypervolume: point has " + std::to_string(p.size()) + " objectives, ref " +
                                        std::to_string(ref.size()));
        }
        bool inside = true;
        for (std::size_t t = 0; t < p.size(); ++t) inside = inside && p[t] < ref[t];
        if (inside) kept.push_back(p);
    }
    return kept;
}

/// Area dominated by (x, y) pairs already sorted by x ascending.
inline double sweep_area_2d(const std::vector<std::pair<double, double>>& sorted, double ref_x, double ref_y) {
    double area = 0.0;
    double floor_y = ref_y;
    for (const auto& [x, y] : sorted) {
        if (y < floor_y) {
            area += (ref_x - x) * (floor_y - y);
            floor_y = y;
        }
    }
    return area;
}

}  // namespace detail

/// Lebesgue measure of the union of boxes [p, ref] over points p strictly dominating ref.
inline double hypervolume(const std::vector<ObjectivePoint>& points, std::span<const double> ref) {
    detail::check_reference(ref);
    auto kept = detail::clip_to_reference(points, ref);
    if (kept.empty()) return 0.0;
    if (ref.size() == 2) {
        std::vector<std::pair<double, double>> xy;
        xy.reserve(kept.size());
        for (const auto& p : kept) xy.emplace_back(p[0], p[1]);
        std::sort(xy.begin(), xy.end());
        return detail::sweep_area_2d(xy, ref[0], ref[1]);
    }
    // Sweep the third objective upward; each slab has the 2-d hypervolume of
    // every point at or below it.
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a[2] < b[2]; });
    std::vector<std::pair<double, double>> slice;
    double volume = 0.0;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const std::pair<double, double> xy{kept[i][0], kept[i][1]};
        slice.insert(std::upper_bound(slice.begin(), slice.end(), xy), xy);
        const double next_z = i + 1 < kept.size() ? kept[i + 1][2] : ref[2];
        const double height = next_z - kept[i][2];
        if (height > 0.0) volume += detail::sweep_area_2d(slice, ref[0], ref[1]) * height;
    }
    return volume;
}

struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// Uniform sampling of the box [componentwise min of the points, ref].
inline MonteCarloEstimate hypervolume_mc(const std::vector<ObjectivePoint>& points, std::span<const double> ref,
                                         std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw std::invalid_argument("hypervolume_mc: need at least one sample");
    if (ref.empty()) throw std::invalid_argument("hypervolume_mc: empty reference point");
    auto kept = detail::clip_to_reference(points, ref);
    if (kept.empty()) return {};
    const std::size_t dims = ref.size();
    ObjectivePoint lower(ref.begin(), ref.end());
    for (const auto& p : kept)
        for (std::size_t t = 0; t < dims; ++t) lower[t] = std::min(lower[t], p[t]);
    double box = 1.0;
    for (std::size_t t = 0; t < dims; ++t) box *= ref[t] - lower[t];
    if (!(box > 0.0)) return {};

    Rng rng(seed);
    ObjectivePoint sample(dims);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (std::size_t t = 0; t < dims; ++t) sample[t] = lower[t] + (ref[t] - lower[t]) * rng.uniform();
        const bool covered = std::any_of(kept.begin(), kept.end(), [&](const ObjectivePoint& p) {
            for (std::size_t t = 0; t < dims; ++t)
                if (p[t] > sample[t]) return false;
            return true;
        });
        if (covered) ++hits;
    }
    const double frac = static_cast<double>(hits) / static_cast<double>(n_samples);
    return {frac * box, box * std::sqrt(frac * (1.0 - frac) / static_cast<double>(n_samples))};
}

/// 1-based ranks; tied values share the average of their ranks.
inline std::vector<double> average_ranks(std::span<const double> xs) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
    std::vector<double> ranks(xs.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

/// Pearson correlation of average ranks; 0 if either side is constant.
inline double spearman(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("spearman: lengths differ");
    if (xs.size() < 2) throw std::invalid_argument("spearman: need at least two observations");
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    const double mean = 0.5 * static_cast<double>(xs.size() + 1);  // same for both rank vectors
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mean;
        const double dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Per task, the rank correlation between the preference weight and the loss
/// across the front. Aligned fronts have negative values.
inline std::vector<double> pareto_alignment(const std::vector<FrontRecord>& front) {
    if (front.empty()) throw std::invalid_argument("pareto_alignment: empty front");
    const std::size_t tasks = front.front().preference.size();
    bool distinct = false;
    for (const auto& rec : front) {
        if (rec.preference.size() != tasks || rec.losses.size() != tasks) {
            throw std::invalid_argument("pareto_alignment: inconsistent task counts");
        }
        distinct = distinct || !(rec.preference == front.front().preference);
    }
    if (!distinct) throw std::invalid_argument("pareto_alignment: front needs at least two distinct preferences");
    std::vector<double> rho(tasks);
    std::vector<double> weights(front.size()), losses(front.size());
    for (std::size_t t = 0; t < tasks; ++t) {
        for (std::size_t i = 0; i < front.size(); ++i) {
            weights[i] = front[i].preference[t];
            losses[i] = front[i].losses[t];
        }
        rho[t] = spearman(weights, losses);
    }
    return rho;
}

inline std::vector<ObjectivePoint> losses_of(const std::vector<FrontRecord>& front) {
    std::vector<ObjectivePoint> out;
    out.reserve(front.size());
    for (const auto& rec : front) out.push_back(rec.losses);
    return out;
}

}  // namespace palora
