// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gup {

using Shape = std::vector<std::size_t>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A convolution/layer specification is internally invalid (zero-size output,
/// kernel larger than the padded input, even reparam kernel, ...).
class SpecError : public Error {
public:
    using Error::Error;
};

/// Bad configuration value; the message names the offending field.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operation called in the wrong mode (e.g. deploy while training).
class StateError : public Error {
public:
    using Error::Error;
};

/// Structured-text input could not be parsed or validated.
class ParseError : public Error {
public:
    using Error::Error;
};

/// File-level I/O failure: missing file, bad magic, truncation.
class IoError : public Error {
public:
    using Error::Error;
};

/// API misuse that is not a shape problem (empty codebook, non-scalar loss).
class UsageError : public Error {
public:
    using Error::Error;
};

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// ---------------------------------------------------------------------------
// Thread control. Work is always partitioned into index-disjoint contiguous
// chunks, each index handled by exactly one thread in ascending order, so
// results are bit-identical for every thread count.
// ---------------------------------------------------------------------------

inline int& detail_thread_count() {
    static int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return n;
}

inline int thread_count() { return detail_thread_count(); }

inline void set_thread_count(int n) {
    if (n < 0) throw UsageError("set_thread_count: count must be >= 0 (0 = auto)");
    detail_thread_count() = n == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency())) : n;
}

/// Runs fn(i) for i in [0, n). Splits into per-thread contiguous ranges when
/// the workload is worth it; `cost_hint` is an estimate of total scalar ops.
template <class Fn>
void parallel_for(std::size_t n, const Fn& fn, std::uint64_t cost_hint = 0) {
    const int threads = thread_count();
    constexpr std::uint64_t kMinParallelCost = 1u << 21;  // ~2M scalar ops
    if (threads <= 1 || n <= 1 || (cost_hint > 0 && cost_hint < kMinParallelCost)) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace gup
