// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gup/common.hpp"
#include "gup/params.hpp"
#include "gup/tensor.hpp"

namespace gup {

/// Adaptive-moment gradient descent. Moment buffers are keyed by parameter
/// name so state can round-trip through checkpoints and a resumed run
/// continues the exact update sequence.
template <class S>
class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (lr < 0.0) throw UsageError("adam: learning rate must be non-negative");
    }

    double learning_rate() const { return lr_; }
    std::uint64_t steps_taken() const { return step_; }

    void set_learning_rate(double lr) {
        if (lr < 0.0) throw UsageError("adam: learning rate must be non-negative");
        lr_ = lr;
    }

    /// One update from the gradients currently stored on the trainable
    /// entries. Gradients are left untouched; callers zero them per step.
    void step(const ParamList<S>& params) {
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
        for (const auto& p : params.entries()) {
            if (!p.trainable) continue;
            Tensor<S> t = p.tensor;
            auto& slot = slots_[p.name];
            if (slot.m.size() != t.numel()) {
                slot.m.assign(t.numel(), S(0));
                slot.v.assign(t.numel(), S(0));
            }
            const std::vector<S>& g = t.impl()->grad;
            if (g.empty()) continue;
            S* data = t.data().data();
            for (std::size_t i = 0; i < t.numel(); ++i) {
                const double gi = static_cast<double>(g[i]);
                slot.m[i] = static_cast<S>(beta1_ * static_cast<double>(slot.m[i]) + (1.0 - beta1_) * gi);
                slot.v[i] = static_cast<S>(beta2_ * static_cast<double>(slot.v[i]) + (1.0 - beta2_) * gi * gi);
                const double m_hat = static_cast<double>(slot.m[i]) / bc1;
                const double v_hat = static_cast<double>(slot.v[i]) / bc2;
                data[i] = static_cast<S>(static_cast<double>(data[i]) - lr_ * m_hat / (std::sqrt(v_hat) + eps_));
            }
        }
    }

    /// Serializes moments plus the step counter as named tensors, using
    /// "m.<param>" / "v.<param>" / "step".
    std::vector<std::pair<std::string, Tensor<S>>> state_tensors() const {
        std::vector<std::pair<std::string, Tensor<S>>> out;
        Tensor<S> step_t({1});
        step_t.data()[0] = static_cast<S>(step_);
        out.emplace_back("step", step_t);
        for (const auto& [name, slot] : slots_) {
            out.emplace_back("m." + name, Tensor<S>::from_vector({slot.m.size()}, slot.m));
            out.emplace_back("v." + name, Tensor<S>::from_vector({slot.v.size()}, slot.v));
        }
        return out;
    }

    void load_state(const std::map<std::string, Tensor<S>>& state) {
        slots_.clear();
        step_ = 0;
        auto it = state.find("step");
        if (it != state.end()) step_ = static_cast<std::uint64_t>(it->second.data()[0]);
        for (const auto& [name, t] : state) {
            if (name.rfind("m.", 0) == 0) slots_[name.substr(2)].m = t.data();
            if (name.rfind("v.", 0) == 0) slots_[name.substr(2)].v = t.data();
        }
    }

private:
    struct Slot {
        std::vector<S> m, v;
    };

    double lr_, beta1_, beta2_, eps_;
    std::uint64_t step_ = 0;
    std::map<std::string, Slot> slots_;
};

}  // namespace gup
