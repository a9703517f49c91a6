// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Datasets: IDX (MNIST) parsing, MultiMNIST overlays, the linear two-objective
// problem with a closed-form Pareto front, and seeded splits.

#pragma once

#include "palora/metrics.hpp"
#include "palora/random.hpp"
#include "palora/tensor.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace palora {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// IDX

struct IdxTensor {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
    friend bool operator==(const IdxTensor&, const IdxTensor&) = default;
};

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

inline IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
    auto read_be32 = [&](std::size_t at) {
        return static_cast<std::uint32_t>(bytes[at]) << 24 | static_cast<std::uint32_t>(bytes[at + 1]) << 16 |
               static_cast<std::uint32_t>(bytes[at + 2]) << 8 | static_cast<std::uint32_t>(bytes[at + 3]);
    };
    if (bytes.size() < 4) throw FormatError("idx: truncated header");
    const std::uint32_t magic = read_be32(0);
    if (magic != kIdxLabelMagic && magic != kIdxImageMagic) {
        throw FormatError("idx: bad magic number " + std::to_string(magic));
    }
    const std::size_t ndims = magic & 0xFF;
    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() < header) throw FormatError("idx: truncated dimension list");
    IdxTensor out;
    std::size_t count = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        out.dims.push_back(read_be32(4 + 4 * d));
        count *= out.dims.back();
    }
    if (bytes.size() - header != count) {
        throw FormatError("idx: payload has " + std::to_string(bytes.size() - header) + " bytes, dims imply " +
                          std::to_string(count));
    }
    out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return out;
}

inline std::vector<std::uint8_t> serialize_idx(const IdxTensor& t) {
    if (t.dims.size() != 1 && t.dims.size() != 3) throw FormatError("idx: only 1-d labels or 3-d images");
    std::vector<std::uint8_t> out;
    auto put_be32 = [&](std::uint32_t v) {
        for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
    };
    put_be32(0x00000800 | static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_be32(d);
    out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
}

/// Reads a whole file, inflating it when it carries a gzip header.
inline std::vector<std::uint8_t> read_maybe_gzip(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() < 2 || raw[0] != 0x1f || raw[1] != 0x8b) return raw;

    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) throw FormatError("gzip: inflateInit failed");
    zs.next_in = raw.data();
    zs.avail_in = static_cast<uInt>(raw.size());
    std::vector<std::uint8_t> out;
    std::uint8_t chunk[1 << 16];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = chunk;
        zs.avail_out = sizeof(chunk);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("gzip: corrupt stream in " + path);
        }
        out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw FormatError("gzip: truncated stream in " + path);
        }
    }
    inflateEnd(&zs);
    return out;
}

inline IdxTensor load_idx(const std::string& path) { return parse_idx(read_maybe_gzip(path)); }

// ---------------------------------------------------------------------------
// Datasets

enum class LossKind { classification, regression };

inline std::string to_string(LossKind k) { return k == LossKind::classification ? "classification" : "regression"; }
inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "classification") return LossKind::classification;
    if (s == "regression") return LossKind::regression;
    throw std::invalid_argument("unknown loss kind '" + s + "'");
}

/// Targets of one task: class indices or a regression block.
struct TaskTargets {
    LossKind kind = LossKind::classification;
    std::vector<int> labels;  // classification
    Matrix values;            // regression, N x out_dim

    std::size_t rows() const noexcept { return kind == LossKind::classification ? labels.size() : values.rows(); }

    TaskTargets gather(std::span<const std::size_t> idx) const {
        TaskTargets out;
        out.kind = kind;
        if (kind == LossKind::classification) {
            out.labels.reserve(idx.size());
            for (auto i : idx) out.labels.push_back(labels.at(i));
        } else {
            out.values = values.gather_rows(idx);
        }
        return out;
    }
};

struct LabeledDataset {
    Matrix inputs;  // N x d
    std::vector<TaskTargets> targets;

    std::size_t size() const noexcept { return inputs.rows(); }
    std::size_t num_tasks() const noexcept { return targets.size(); }

    void validate() const {
        for (const auto& t : targets) {
            if (t.rows() != inputs.rows()) {
                throw ShapeError("dataset: task targets have " + std::to_string(t.rows()) + " rows for " +
                                 std::to_string(inputs.rows()) + " inputs");
            }
        }
        if (!inputs.all_finite()) throw std::invalid_argument("dataset: non-finite inputs");
    }

    LabeledDataset subset(std::span<const std::size_t> idx) const {
        LabeledDataset out;
        out.inputs = inputs.gather_rows(idx);
        for (const auto& t : targets) out.targets.push_back(t.gather(idx));
        return out;
    }
    LabeledDataset slice(std::size_t first, std::size_t count) const {
        std::vector<std::size_t> idx(count);
        std::iota(idx.begin(), idx.end(), first);
        return subset(idx);
    }
};

/// A mini-batch has the same layout as a dataset.
using Batch = LabeledDataset;

/// Seeded shuffle, then the first round(fraction * N) rows go to validation.
inline std::pair<LabeledDataset, LabeledDataset> train_val_split(const LabeledDataset& data, double val_fraction,
                                                                 std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw std::invalid_argument("train_val_split: fraction must lie in (0, 1)");
    }
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(data.size())));
    std::span<const std::size_t> all(idx);
    return {data.subset(all.subspan(n_val)), data.subset(all.first(n_val))};
}

// ---------------------------------------------------------------------------
// MultiMNIST

inline constexpr std::size_t kDigitSide = 28;
inline constexpr std::size_t kOverlayOffset = 8;
inline constexpr std::size_t kCanvasSide = kDigitSide + kOverlayOffset;  // 36

/// Pixelwise maximum of digit `first` at the top-left corner and digit `second`
/// shifted by kOverlayOffset in both directions, scaled to [0, 1].
inline void overlay_digits(std::span<const std::uint8_t> first, std::span<const std::uint8_t> second,
                           std::span<double> canvas) {
    std::fill(canvas.begin(), canvas.end(), 0.0);
    for (std::size_t r = 0; r < kDigitSide; ++r) {
        for (std::size_t c = 0; c < kDigitSide; ++c) {
            canvas[r * kCanvasSide + c] = first[r * kDigitSide + c] / 255.0;
        }
    }
    for (std::size_t r = 0; r < kDigitSide; ++r) {
        for (std::size_t c = 0; c < kDigitSide; ++c) {
            double& px = canvas[(r + kOverlayOffset) * kCanvasSide + c + kOverlayOffset];
            px = std::max(px, second[r * kDigitSide + c] / 255.0);
        }
    }
}

/// n_out overlaid pairs; task 0 predicts the top-left digit, task 1 the bottom-right.
inline LabeledDataset build_multimnist(const IdxTensor& images, const IdxTensor& labels, std::size_t n_out,
                                       std::uint64_t seed, bool distinct_pairs = false) {
    if (images.dims.size() != 3 || images.dims[1] != kDigitSide || images.dims[2] != kDigitSide) {
        throw FormatError("multimnist: images must be N x 28 x 28");
    }
    if (labels.dims.size() != 1 || labels.dims[0] != images.dims[0]) {
        throw FormatError("multimnist: label count does not match image count");
    }
    const std::size_t n = images.dims[0];
    if (n < 2) throw std::invalid_argument("multimnist: need at least two digits");
    if (distinct_pairs && n_out > n * (n - 1)) {
        throw std::invalid_argument("multimnist: " + std::to_string(n_out) + " distinct pairs requested, only " +
                                    std::to_string(n * (n - 1)) + " exist");
    }
    constexpr std::size_t pixels = kDigitSide * kDigitSide;
    LabeledDataset out;
    out.inputs = Matrix(n_out, kCanvasSide * kCanvasSide);
    out.targets.resize(2);
    for (auto& t : out.targets) t.labels.reserve(n_out);
    std::set<std::pair<std::size_t, std::size_t>> used;
    Rng rng(seed);
    for (std::size_t k = 0; k < n_out; ++k) {
        std::size_t i = 0, j = 0;
        do {
            i = static_cast<std::size_t>(rng.below(n));
            j = static_cast<std::size_t>(rng.below(n - 1));
            if (j >= i) ++j;
        } while (distinct_pairs && !used.emplace(i, j).second);
        overlay_digits(std::span(images.data).subspan(i * pixels, pixels),
                       std::span(images.data).subspan(j * pixels, pixels), out.inputs.row(k));
        out.targets[0].labels.push_back(labels.data[i]);
        out.targets[1].labels.push_back(labels.data[j]);
    }
    return out;
}

/// Splits an IDX image/label pair into two disjoint digit pools.
inline std::pair<std::pair<IdxTensor, IdxTensor>, std::pair<IdxTensor, IdxTensor>> split_digits(
    const IdxTensor& images, const IdxTensor& labels, double second_fraction, std::uint64_t seed) {
    const std::size_t n = labels.dims.at(0);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n_second = static_cast<std::size_t>(std::llround(second_fraction * static_cast<double>(n)));
    constexpr std::size_t pixels = kDigitSide * kDigitSide;
    auto take = [&](std::span<const std::size_t> which) {
        IdxTensor im{{static_cast<std::uint32_t>(which.size()), kDigitSide, kDigitSide}, {}};
        IdxTensor lb{{static_cast<std::uint32_t>(which.size())}, {}};
        for (auto i : which) {
            im.data.insert(im.data.end(), images.data.begin() + static_cast<std::ptrdiff_t>(i * pixels),
                           images.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * pixels));
            lb.data.push_back(labels.data[i]);
        }
        return std::pair{im, lb};
    };
    std::span<const std::size_t> all(idx);
    return {take(all.subspan(n_second)), take(all.first(n_second))};
}

// ---------------------------------------------------------------------------
// Linear two-objective problem

/// x ~ N(0, I_d), y_t = <c_t, x> + noise with c_1 = a, c_2 = b. For a linear
/// predictor theta the population losses are ||theta - c_t||^2 + noise^2, so the
/// Pareto set is the segment [a, b].
struct SyntheticProblem {
    std::vector<double> a;
    std::vector<double> b;
    std::size_t samples = 2000;
    double noise = 0.01;

    std::size_t dim() const noexcept { return a.size(); }
    void validate() const {
        if (a.empty() || a.size() != b.size()) throw std::invalid_argument("synthetic: anchors must share a nonzero dimension");
        if (a == b) throw std::invalid_argument("synthetic: anchors must differ");
        if (!(noise >= 0.0)) throw std::invalid_argument("synthetic: noise must be >= 0");
    }
};

/// Anchors drawn i.i.d. N(0, 1) from a seed.
inline SyntheticProblem make_synthetic_problem(std::size_t dim, std::size_t samples, double noise,
                                               std::uint64_t anchor_seed) {
    SyntheticProblem p;
    Rng rng(anchor_seed);
    p.a.resize(dim);
    p.b.resize(dim);
    for (auto& v : p.a) v = rng.normal();
    for (auto& v : p.b) v = rng.normal();
    p.samples = samples;
    p.noise = noise;
    return p;
}

inline LabeledDataset synthetic_two_objective(const SyntheticProblem& problem, std::uint64_t seed) {
    problem.validate();
    const std::size_t d = problem.dim();
    LabeledDataset out;
    out.inputs = Matrix(problem.samples, d);
    out.targets.resize(2);
    for (auto& t : out.targets) {
        t.kind = LossKind::regression;
        t.values = Matrix(problem.samples, 1);
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < problem.samples; ++i) {
        auto x = out.inputs.row(i);
        for (auto& v : x) v = rng.normal();
        const double ya = std::inner_product(x.begin(), x.end(), problem.a.begin(), 0.0);
        const double yb = std::inner_product(x.begin(), x.end(), problem.b.begin(), 0.0);
        out.targets[0].values(i, 0) = ya + problem.noise * rng.normal();
        out.targets[1].values(i, 0) = yb + problem.noise * rng.normal();
    }
    return out;
}

/// Closed-form population losses of the predictor y = <theta, x> + offset.
inline ObjectivePoint population_losses(const SyntheticProblem& problem, std::span<const double> theta,
                                        double offset = 0.0) {
    if (theta.size() != problem.dim()) throw ShapeError("population_losses: theta has wrong dimension");
    ObjectivePoint out(2, offset * offset + problem.noise * problem.noise);
    for (std::size_t k = 0; k < theta.size(); ++k) {
        out[0] += (theta[k] - problem.a[k]) * (theta[k] - problem.a[k]);
        out[1] += (theta[k] - problem.b[k]) * (theta[k] - problem.b[k]);
    }
    return out;
}

/// K points along theta(s) = (1 - s) a + s b, s evenly spaced in [0, 1].
inline std::vector<ObjectivePoint> analytic_front(const SyntheticProblem& problem, std::size_t k) {
    if (k < 2) throw std::invalid_argument("analytic_front: need K >= 2");
    problem.validate();
    std::vector<ObjectivePoint> out;
    out.reserve(k);
    std::vector<double> theta(problem.dim());
    for (std::size_t i = 0; i < k; ++i) {
        const double s = static_cast<double>(i) / static_cast<double>(k - 1);
        for (std::size_t j = 0; j < theta.size(); ++j) theta[j] = (1.0 - s) * problem.a[j] + s * problem.b[j];
        out.push_back(population_losses(problem, theta));
    }
    return out;
}

}  // namespace palora
