// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gup/common.hpp"
#include "gup/config.hpp"

namespace gup {

/// Record of one command invocation: what ran, with which settings, when,
/// and what came out. Written as line-oriented key=value text; the config
/// snapshot is embedded with a "config." prefix per line so the whole file
/// stays machine-parseable with one grammar.
struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    std::string git_describe;
    std::string started_at;
    std::string finished_at;
    std::string config_text;
    std::vector<std::pair<std::string, std::string>> results;

    void add_result(const std::string& key, const std::string& value) { results.emplace_back(key, value); }

    std::string to_text() const {
        std::ostringstream os;
        os << "command=" << command << "\n";
        os << "seed=" << seed << "\n";
        os << "git=" << git_describe << "\n";
        os << "started_at=" << started_at << "\n";
        os << "finished_at=" << finished_at << "\n";
        for (const auto& [k, v] : results) os << "result." << k << "=" << v << "\n";
        std::stringstream cfg(config_text);
        std::string line;
        while (std::getline(cfg, line))
            if (!line.empty()) os << "config." << line << "\n";
        return os.str();
    }
};

namespace detail {

inline std::string iso_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string git_describe() {
    FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
    if (pipe == nullptr) return "unknown";
    char buf[128];
    std::string out;
    while (fgets(buf, sizeof(buf), pipe) != nullptr) out += buf;
    pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

}  // namespace detail

inline RunManifest begin_manifest(const std::string& command, const Config& config) {
    RunManifest m;
    m.command = command;
    m.seed = config.run.seed;
    m.git_describe = detail::git_describe();
    m.started_at = detail::iso_utc_now();
    m.config_text = config.to_text();
    return m;
}

inline void write_manifest(RunManifest& m, const std::string& path) {
    m.finished_at = detail::iso_utc_now();
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest: " + path);
    os << m.to_text();
    if (!os) throw IoError("manifest write failed: " + path);
}

}  // namespace gup
