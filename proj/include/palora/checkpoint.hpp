// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container, little-endian:
//
//   8 bytes   magic "PALORA01"
//   8 bytes   header length H (uint64)
//   H bytes   JSON header: format_version, model spec, steps, schedule, data
//             source, and a block directory {name, rows, cols, offset}
//   payload   raw float64 blocks; offsets are relative to the payload start

#pragma once

#include "palora/config.hpp"
#include "palora/model.hpp"

#include "json.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace palora {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'P', 'A', 'L', 'O', 'R', 'A', '0', '1'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    ScheduleConfig schedule;
    std::optional<DataConfig> data;
    std::optional<TrainConfig> train;  // configuration that produced the model
};

namespace detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
    const auto& model = ck.model;
    std::vector<const Matrix*> blocks;
    json directory = json::array();
    std::uint64_t offset = 0;
    auto add = [&](const std::string& name, const Matrix& m) {
        directory.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
        offset += m.size() * sizeof(double);
        blocks.push_back(&m);
    };
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        const auto& layer = model.layers()[i];
        const auto prefix = model.layer_name(i);
        add(prefix + ".weight", layer.weight());
        add(prefix + ".bias", layer.bias());
        for (std::size_t t = 0; t < layer.num_tasks(); ++t) {
            add(prefix + ".adapter" + std::to_string(t) + ".A", layer.adapters()[t].a);
            add(prefix + ".adapter" + std::to_string(t) + ".B", layer.adapters()[t].b);
        }
    }
    json header = {{"format_version", kCheckpointVersion},
                   {"model", to_json(model.spec())},
                   {"steps", model.steps_trained()},
                   {"schedule", to_json(ck.schedule)},
                   {"blocks", directory}};
    if (ck.data) header["data"] = to_json(*ck.data);
    if (ck.train) header["train"] = to_json(*ck.train);
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    detail::put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    const std::size_t payload_at = out.size();
    out.resize(payload_at + offset);
    std::size_t at = payload_at;
    for (const auto* m : blocks) {
        std::memcpy(out.data() + at, m->values().data(), m->size() * sizeof(double));
        at += m->size() * sizeof(double);
    }
    return out;
}

inline Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
        throw CheckpointError("checkpoint: bad magic (not a PALORA01 file)");
    }
    const std::uint64_t header_len = detail::get_u64(bytes.data() + 8);
    if (header_len > bytes.size() - 16) throw CheckpointError("checkpoint: truncated header");
    json header;
    try {
        header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: corrupt header: ") + e.what());
    }
    if (header.value("format_version", -1) != kCheckpointVersion) {
        throw CheckpointError("checkpoint: unsupported format version " + header.value("format_version", json()).dump());
    }
    const std::size_t payload_at = 16 + header_len;
    const std::size_t payload_len = bytes.size() - payload_at;

    try {
        const auto spec = model_spec_from_json(header.at("model"));
        std::map<std::string, Matrix> blocks;
        for (const auto& b : header.at("blocks")) {
            const auto rows = b.at("rows").get<std::size_t>();
            const auto cols = b.at("cols").get<std::size_t>();
            const auto off = b.at("offset").get<std::uint64_t>();
            const std::size_t len = rows * cols * sizeof(double);
            if (off > payload_len || len > payload_len - off) {
                throw CheckpointError("checkpoint: block " + b.at("name").get<std::string>() + " exceeds payload");
            }
            Matrix m(rows, cols);
            std::memcpy(m.values().data(), bytes.data() + payload_at + off, len);
            blocks.emplace(b.at("name").get<std::string>(), std::move(m));
        }
        auto take = [&](const std::string& name) {
            auto it = blocks.find(name);
            if (it == blocks.end()) throw CheckpointError("checkpoint: missing block " + name);
            return std::move(it->second);
        };
        std::vector<PaLoRALayer> layers;
        for (std::size_t i = 0; i < spec.num_encoder_layers() + spec.num_head_layers(); ++i) {
            const auto prefix = layer_name(spec, i);
            std::vector<AdapterPair> adapters;
            for (std::size_t t = 0; t < spec.num_tasks(); ++t) {
                adapters.push_back({take(prefix + ".adapter" + std::to_string(t) + ".A"),
                                    take(prefix + ".adapter" + std::to_string(t) + ".B")});
            }
            layers.push_back(PaLoRALayer::from_blocks(take(prefix + ".weight"), take(prefix + ".bias"),
                                                      std::move(adapters), spec.rank, spec.alpha));
        }
        Checkpoint ck;
        ck.model = Model::from_layers(spec, std::move(layers), header.at("steps").get<std::uint64_t>());
        ck.schedule = schedule_from_json(header.at("schedule"), spec.num_tasks(), 0);
        if (header.contains("data")) ck.data = data_config_from_json(header.at("data"));
        if (header.contains("train")) {
            ck.train = train_config_from_json(header.at("train"), spec.num_tasks(), ck.schedule.seed);
        }
        return ck;
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
}

/// Writes to a temporary sibling, then renames over the destination.
inline void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t size) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const auto bytes = serialize_checkpoint(ck);
    write_file_atomic(path, bytes.data(), bytes.size());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const std::exception& e) {
        throw CheckpointError(e.what());
    }
    return parse_checkpoint(bytes);
}

}  // namespace palora
