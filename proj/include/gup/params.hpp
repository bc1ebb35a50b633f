// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gup/common.hpp"
#include "gup/rng.hpp"
#include "gup/tensor.hpp"

namespace gup {

/// Named tensor slot. Trainable entries receive gradients and optimizer
/// updates; non-trainable entries are persistent state (normalization
/// statistics).
template <class S>
struct Parameter {
    std::string name;
    Tensor<S> tensor;
    bool trainable = true;
};

/// Flat view of a module tree's named state, rebuilt on demand so topology
/// changes (deploy-time merging) can never leave a stale registry behind.
template <class S>
class ParamList {
public:
    void add(std::string name, const Tensor<S>& tensor, bool trainable) {
        if (!seen_.insert(name).second) throw UsageError("duplicate parameter name: " + name);
        entries_.push_back(Parameter<S>{std::move(name), tensor, trainable});
    }

    const std::vector<Parameter<S>>& entries() const { return entries_; }

    std::vector<Parameter<S>> trainable() const {
        std::vector<Parameter<S>> out;
        for (const auto& p : entries_)
            if (p.trainable) out.push_back(p);
        return out;
    }

    const Parameter<S>* find(const std::string& name) const {
        for (const auto& p : entries_)
            if (p.name == name) return &p;
        return nullptr;
    }

private:
    std::vector<Parameter<S>> entries_;
    std::unordered_set<std::string> seen_;
};

/// Total trainable element count.
template <class S>
std::size_t count_parameters(const std::vector<Parameter<S>>& params) {
    std::size_t n = 0;
    for (const auto& p : params)
        if (p.trainable) n += p.tensor.numel();
    return n;
}

/// Millions with one decimal, e.g. "52.4M".
inline std::string format_millions(std::size_t count) {
    const double m = static_cast<double>(count) / 1e6;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1fM", m);
    return buf;
}

// ---------------------------------------------------------------------------
// Initialization. Every tensor draws from its own stream keyed by
// (seed, parameter name), so shared subtrees are bit-identical across model
// variants and independent of construction order.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> init_fan_in_uniform(std::uint64_t seed, const std::string& name, Shape shape, std::size_t fan_in) {
    if (fan_in == 0) throw UsageError("init_fan_in_uniform: zero fan-in for " + name);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    SplitMix64 rng(seed, name);
    Tensor<S> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<S>(rng.next_uniform(-bound, bound));
    t.set_requires_grad(true);
    return t;
}

template <class S>
Tensor<S> init_constant(Shape shape, S value, bool requires_grad = true) {
    Tensor<S> t = Tensor<S>::full(std::move(shape), value);
    t.set_requires_grad(requires_grad);
    return t;
}

}  // namespace gup
