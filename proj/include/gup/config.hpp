// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gup/common.hpp"
#include "gup/data.hpp"
#include "gup/model.hpp"

namespace gup {

/// Execution settings shared by every command.
struct RuntimeConfig {
    std::uint64_t seed = 42;
    std::string precision = "f32";
    int threads = 1;
    std::string out_dir = "gup_out";
};

/// Toy-training hyperparameters.
struct TrainSettings {
    std::size_t steps = 300;
    std::size_t batch = 2;
    std::size_t holdout = 16;
    std::size_t log_every = 10;
    double lr = 3e-3;
    double lambda_od = 0.0;
    double sigma = 2.0;

    void validate() const {
        if (steps == 0) throw ConfigError("train.steps: must be positive");
        if (batch == 0) throw ConfigError("train.batch: must be positive");
        if (lr < 0.0) throw ConfigError("train.lr: must be non-negative");
        if (lambda_od < 0.0) throw ConfigError("train.lambda_od: must be non-negative");
        if (sigma <= 0.0) throw ConfigError("train.sigma: must be positive");
        if (log_every == 0) throw ConfigError("train.log_every: must be positive");
    }
};

/// Full settings tree parsed from a config file. Synthetic-data geometry
/// (image size, joint count, seed) follows the model section, so only the
/// free knobs appear as synth.* keys.
struct Config {
    ModelConfig model = ModelConfig::toy_preset();
    TrainSettings train;
    SyntheticSpec synth;
    RuntimeConfig run;

    /// Applies the cross-section couplings and validates everything.
    void finalize() {
        synth.joints = model.joints;
        synth.image_h = model.input_h;
        synth.image_w = model.input_w;
        synth.seed = run.seed;
        model.seed = run.seed;
        if (run.precision != "f32" && run.precision != "f64")
            throw ConfigError("precision: expected f32 or f64, got '" + run.precision + "'");
        if (run.threads < 0) throw ConfigError("threads: must be non-negative");
        if (train.holdout >= synth.count)
            throw ConfigError("train.holdout: must leave at least one training sample (count " +
                              std::to_string(synth.count) + ")");
        model.validate();
        train.validate();
        synth.validate();
    }

    /// Canonical text form. parse_config(to_text()) restores the config.
    std::string to_text() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(parse_u64(key, trim(item))));
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
    return out;
}

inline std::string format_size_list(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

/// Applies one key = value assignment. Unknown keys are rejected.
inline void apply_config_key(Config& c, const std::string& key, const std::string& value) {
    if (key == "model.preset") {
        if (value == "toy")
            c.model = ModelConfig::toy_preset();
        else if (value == "paper")
            c.model = ModelConfig::paper_preset();
        else
            throw ConfigError("model.preset: expected toy or paper, got '" + value + "'");
    } else if (key == "model.input_h")
        c.model.input_h = parse_u64(key, value);
    else if (key == "model.input_w")
        c.model.input_w = parse_u64(key, value);
    else if (key == "model.joints")
        c.model.joints = parse_u64(key, value);
    else if (key == "model.stem_channels")
        c.model.stem_channels = parse_u64(key, value);
    else if (key == "model.decoder_channels")
        c.model.decoder_channels = parse_u64(key, value);
    else if (key == "model.depths")
        c.model.depths = parse_size_list(key, value);
    else if (key == "model.channels")
        c.model.channels = parse_size_list(key, value);
    else if (key == "model.kernels")
        c.model.kernels = parse_size_list(key, value);
    else if (key == "model.use_gconv")
        c.model.use_gconv = parse_bool(key, value);
    else if (key == "model.use_glace")
        c.model.use_glace = parse_bool(key, value);
    else if (key == "model.use_dysample")
        c.model.use_dysample = parse_bool(key, value);
    else if (key == "seed")
        c.run.seed = parse_u64(key, value);
    else if (key == "precision")
        c.run.precision = value;
    else if (key == "threads")
        c.run.threads = static_cast<int>(parse_u64(key, value));
    else if (key == "out_dir")
        c.run.out_dir = value;
    else if (key == "train.steps")
        c.train.steps = parse_u64(key, value);
    else if (key == "train.batch")
        c.train.batch = parse_u64(key, value);
    else if (key == "train.holdout")
        c.train.holdout = parse_u64(key, value);
    else if (key == "train.log_every")
        c.train.log_every = parse_u64(key, value);
    else if (key == "train.lr")
        c.train.lr = parse_double(key, value);
    else if (key == "train.lambda_od")
        c.train.lambda_od = parse_double(key, value);
    else if (key == "train.sigma")
        c.train.sigma = parse_double(key, value);
    else if (key == "synth.count")
        c.synth.count = parse_u64(key, value);
    else if (key == "synth.blob_radius")
        c.synth.blob_radius = parse_double(key, value);
    else if (key == "synth.jitter")
        c.synth.jitter = parse_double(key, value);
    else if (key == "synth.noise")
        c.synth.noise = parse_double(key, value);
    else
        throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace detail

/// Parses `key = value` lines; # starts a comment, blank lines are skipped.
/// Keys apply in file order (so a preset line resets the model section and
/// later model.* lines refine it). The result is not finalized; callers may
/// layer flag overrides first.
inline Config parse_config_text(const std::string& text) {
    Config c;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value, got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        detail::apply_config_key(c, key, value);
    }
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

inline std::string Config::to_text() const {
    std::ostringstream os;
    os << "model.input_h = " << model.input_h << "\n";
    os << "model.input_w = " << model.input_w << "\n";
    os << "model.joints = " << model.joints << "\n";
    os << "model.stem_channels = " << model.stem_channels << "\n";
    os << "model.decoder_channels = " << model.decoder_channels << "\n";
    os << "model.depths = " << detail::format_size_list(model.depths) << "\n";
    os << "model.channels = " << detail::format_size_list(model.channels) << "\n";
    os << "model.kernels = " << detail::format_size_list(model.kernels) << "\n";
    os << "model.use_gconv = " << (model.use_gconv ? "true" : "false") << "\n";
    os << "model.use_glace = " << (model.use_glace ? "true" : "false") << "\n";
    os << "model.use_dysample = " << (model.use_dysample ? "true" : "false") << "\n";
    os << "seed = " << run.seed << "\n";
    os << "precision = " << run.precision << "\n";
    os << "threads = " << run.threads << "\n";
    os << "out_dir = " << run.out_dir << "\n";
    os << "train.steps = " << train.steps << "\n";
    os << "train.batch = " << train.batch << "\n";
    os << "train.holdout = " << train.holdout << "\n";
    os << "train.log_every = " << train.log_every << "\n";
    os << "train.lr = " << detail::format_double(train.lr) << "\n";
    os << "train.lambda_od = " << detail::format_double(train.lambda_od) << "\n";
    os << "train.sigma = " << detail::format_double(train.sigma) << "\n";
    os << "synth.count = " << synth.count << "\n";
    os << "synth.blob_radius = " << detail::format_double(synth.blob_radius) << "\n";
    os << "synth.jitter = " << detail::format_double(synth.jitter) << "\n";
    os << "synth.noise = " << detail::format_double(synth.noise) << "\n";
    return os.str();
}

}  // namespace gup
