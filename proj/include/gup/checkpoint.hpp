// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gup/binary_io.hpp"
#include "gup/common.hpp"
#include "gup/config.hpp"
#include "gup/model.hpp"
#include "gup/tensor.hpp"

namespace gup {

// Checkpoint container: magic "GUPZ", format version, then a count-prefixed
// list of named records (name, dtype tag, rank, extents, raw data). Model
// tensors live under "param.", optimizer state under "optim.", and two byte
// records carry the config text and the deployed flag.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class S>
struct RawRecord {
    std::string name;
    std::uint8_t tag = 0;
    Shape shape;
    std::vector<S> numeric;    // valid when tag matches S
    std::vector<std::uint8_t> bytes;  // valid when tag == kByteTag
};

template <class S>
void write_record(std::ostream& os, const std::string& name, const Tensor<S>& t) {
    write_string(os, name);
    write_u8(os, dtype_tag<S>());
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_u64(os, d);
    write_bytes(os, t.data().data(), t.numel() * sizeof(S));
}

inline void write_byte_record(std::ostream& os, const std::string& name, const std::string& payload) {
    write_string(os, name);
    write_u8(os, kByteTag);
    write_u32(os, 1);
    write_u64(os, payload.size());
    write_bytes(os, payload.data(), payload.size());
}

template <class S>
RawRecord<S> read_record(std::istream& is, const std::string& path) {
    RawRecord<S> rec;
    rec.name = read_string(is);
    rec.tag = read_u8(is);
    const std::uint32_t rank = read_u32(is);
    if (rank > 8) throw IoError(path + ": record '" + rec.name + "' has implausible rank");
    rec.shape.resize(rank);
    std::size_t numel = 1;
    for (auto& d : rec.shape) {
        d = read_u64(is);
        numel *= d;
    }
    if (rec.tag == kByteTag) {
        rec.bytes.resize(numel);
        if (numel > 0) read_bytes(is, rec.bytes.data(), numel);
    } else if (rec.tag == dtype_tag<S>()) {
        rec.numeric.resize(numel);
        if (numel > 0) read_bytes(is, rec.numeric.data(), numel * sizeof(S));
    } else {
        throw IoError(path + ": record '" + rec.name + "' stores dtype tag " + std::to_string(rec.tag) +
                      ", which does not match the requested precision");
    }
    return rec;
}

}  // namespace detail

/// Extra named tensors saved alongside the model (optimizer state).
template <class S>
using NamedTensors = std::vector<std::pair<std::string, Tensor<S>>>;

template <class S>
void save_checkpoint(const std::string& path, GatedUniPoseModel<S>& model, const Config& config,
                     const NamedTensors<S>& extras = {}) {
    auto os = detail::open_out(path);
    detail::write_bytes(os, "GUPZ", 4);
    detail::write_u32(os, kCheckpointVersion);

    std::uint64_t count = 2 + extras.size();
    model.visit_params([&](const std::string&, const Tensor<S>&, bool) { ++count; });
    detail::write_u64(os, count);

    detail::write_byte_record(os, "meta.config", config.to_text());
    detail::write_byte_record(os, "meta.deployed", std::string(1, model.is_deployed() ? '\x01' : '\x00'));
    model.visit_params(
        [&](const std::string& name, const Tensor<S>& t, bool) { detail::write_record(os, "param." + name, t); });
    for (const auto& [name, t] : extras) detail::write_record(os, "optim." + name, t);
}

template <class S>
struct LoadedCheckpoint {
    Config config;
    bool deployed = false;
    GatedUniPoseModel<S> model;
    std::map<std::string, Tensor<S>> extras;

    explicit LoadedCheckpoint(const ModelConfig& mc) : model(mc) {}
};

/// Rebuilds the model recorded in a checkpoint: parses the embedded config,
/// constructs the matching topology (merged topology when the deployed flag
/// is set), and fills every parameter by name. Unknown or missing parameter
/// records and shape mismatches are errors naming the offender.
template <class S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
    auto is = detail::open_in(path);
    char magic[4];
    detail::read_bytes(is, magic, 4);
    if (std::string(magic, 4) != "GUPZ") throw IoError(path + ": bad magic, not a checkpoint file");
    const std::uint32_t version = detail::read_u32(is);
    if (version != kCheckpointVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t count = detail::read_u64(is);

    std::map<std::string, detail::RawRecord<S>> records;
    for (std::uint64_t i = 0; i < count; ++i) {
        auto rec = detail::read_record<S>(is, path);
        const std::string name = rec.name;
        if (!records.emplace(name, std::move(rec)).second)
            throw IoError(path + ": duplicate record '" + name + "'");
    }

    auto cfg_it = records.find("meta.config");
    if (cfg_it == records.end()) throw IoError(path + ": missing meta.config record");
    Config config = parse_config_text(std::string(cfg_it->second.bytes.begin(), cfg_it->second.bytes.end()));
    config.finalize();

    auto dep_it = records.find("meta.deployed");
    if (dep_it == records.end()) throw IoError(path + ": missing meta.deployed record");
    const bool deployed = !dep_it->second.bytes.empty() && dep_it->second.bytes[0] != 0;

    LoadedCheckpoint<S> out(config.model);
    out.config = config;
    out.deployed = deployed;
    if (deployed) out.model.force_deployed_topology();

    std::map<std::string, bool> used;
    out.model.visit_params([&](const std::string& name, const Tensor<S>& t, bool) {
        const std::string key = "param." + name;
        auto it = records.find(key);
        if (it == records.end()) throw IoError(path + ": checkpoint lacks parameter '" + name + "'");
        if (it->second.shape != t.shape())
            throw IoError(path + ": parameter '" + name + "' has shape " + shape_str(it->second.shape) +
                          " on disk but " + shape_str(t.shape()) + " in the model");
        Tensor<S> dst = t;
        dst.data() = it->second.numeric;
        used[key] = true;
    });

    for (auto& [name, rec] : records) {
        if (name.rfind("param.", 0) == 0 && !used.count(name))
            throw IoError(path + ": unknown parameter name '" + name.substr(6) + "'");
        if (name.rfind("optim.", 0) == 0) {
            Tensor<S> t(rec.shape);
            t.data() = rec.numeric;
            out.extras.emplace(name.substr(6), std::move(t));
        }
    }
    return out;
}

}  // namespace gup
