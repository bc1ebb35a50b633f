// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gup/common.hpp"

namespace gup {

// ---------------------------------------------------------------------------
// Dense row-major tensor with reverse-mode autodiff.
//
// Tensor<S> is a cheap shared handle onto TensorImpl<S>. Ops build a tape:
// each result node keeps handles to its parents plus a closure that scatters
// the node's gradient into the parents' gradient buffers. backward() on a
// scalar walks the tape once in reverse topological order. Gradients
// accumulate across calls until zero_grad().
// ---------------------------------------------------------------------------

template <class S>
struct TensorImpl {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // sized lazily, empty means all-zero
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;  // child holds parents, never the reverse
};

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Scoped tape-off switch for inference/evaluation paths.
class NoGradGuard {
public:
    NoGradGuard() : saved_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = saved_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

template <class S>
class Tensor {
public:
    using Scalar = S;

    Tensor() = default;

    explicit Tensor(Shape shape) : impl_(std::make_shared<TensorImpl<S>>()) {
        impl_->shape = std::move(shape);
        impl_->data.assign(shape_numel(impl_->shape), S(0));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, S value) {
        Tensor t(std::move(shape));
        std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
        return t;
    }

    static Tensor scalar(S value) { return full({1}, value); }

    static Tensor from_vector(Shape shape, std::vector<S> values) {
        if (shape_numel(shape) != values.size())
            throw ShapeError("from_vector: " + shape_str(shape) + " needs " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(values.size()));
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl<S>>();
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(values);
        return t;
    }

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const { return impl_->shape; }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t rank() const { return impl_->shape.size(); }

    std::vector<S>& data() { return impl_->data; }
    const std::vector<S>& data() const { return impl_->data; }

    S item() const {
        if (numel() != 1) throw UsageError("item: tensor has " + std::to_string(numel()) + " elements");
        return impl_->data[0];
    }

    // Flat, 3D, and 4D element access (row-major).
    S& at(std::size_t i) { return impl_->data[i]; }
    S at(std::size_t i) const { return impl_->data[i]; }
    S& at(std::size_t c, std::size_t h, std::size_t w) {
        return impl_->data[(c * impl_->shape[1] + h) * impl_->shape[2] + w];
    }
    S at(std::size_t c, std::size_t h, std::size_t w) const {
        return impl_->data[(c * impl_->shape[1] + h) * impl_->shape[2] + w];
    }
    S& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return impl_->data[((n * impl_->shape[1] + c) * impl_->shape[2] + h) * impl_->shape[3] + w];
    }
    S at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return impl_->data[((n * impl_->shape[1] + c) * impl_->shape[2] + h) * impl_->shape[3] + w];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    /// Gradient buffer, created on first touch.
    std::vector<S>& grad() {
        if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), S(0));
        return impl_->grad;
    }
    const std::vector<S>& grad() const {
        const_cast<Tensor*>(this)->grad();
        return impl_->grad;
    }

    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), S(0));
    }

    /// Leaf copy of the values: same data, no grad requirement, no tape.
    Tensor detach() const {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl<S>>();
        t.impl_->shape = impl_->shape;
        t.impl_->data = impl_->data;
        return t;
    }

    Tensor clone() const {
        Tensor t = detach();
        t.impl_->requires_grad = impl_->requires_grad;
        return t;
    }

    std::shared_ptr<TensorImpl<S>> impl() const { return impl_; }

    /// Builds an op result node. `parents` are the differentiable inputs;
    /// `backward_fn` receives the result node and must add into each parent's
    /// grad buffer. The tape entry is dropped when grad mode is off or no
    /// parent needs gradients.
    static Tensor make_result(Shape shape, std::vector<S> values, std::vector<Tensor> parents,
                              std::function<void(TensorImpl<S>&)> backward_fn) {
        Tensor t = from_vector(std::move(shape), std::move(values));
        bool needs = false;
        if (grad_enabled())
            for (const Tensor& p : parents)
                if (p.defined() && p.requires_grad()) needs = true;
        if (needs) {
            t.impl_->requires_grad = true;
            t.impl_->parents.reserve(parents.size());
            for (const Tensor& p : parents)
                if (p.defined()) t.impl_->parents.push_back(p.impl_);
            t.impl_->backward_fn = std::move(backward_fn);
        }
        return t;
    }

    /// Reverse-mode sweep from a scalar. Gradients accumulate (+=) into every
    /// node reachable through the tape; call zero_grad on leaves between
    /// backward passes when accumulation is not wanted.
    void backward() {
        if (numel() != 1) throw UsageError("backward: root must be a scalar, got " + shape_str(shape()));
        if (!impl_->requires_grad)
            throw UsageError("backward: root does not require gradients (no tape recorded)");

        // Iterative post-order DFS for the topological order.
        std::vector<TensorImpl<S>*> order;
        std::unordered_set<TensorImpl<S>*> visited;
        struct Frame {
            TensorImpl<S>* node;
            std::size_t next_parent;
        };
        std::vector<Frame> stack;
        stack.push_back({impl_.get(), 0});
        visited.insert(impl_.get());
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_parent < f.node->parents.size()) {
                TensorImpl<S>* p = f.node->parents[f.next_parent++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }

        if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), S(0));
        impl_->grad[0] += S(1);

        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            TensorImpl<S>* node = *it;
            if (node->backward_fn) {
                if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), S(0));
                node->backward_fn(*node);
            }
        }
    }

private:
    std::shared_ptr<TensorImpl<S>> impl_;
};

/// Ensures impl's grad buffer exists; returns it.
template <class S>
std::vector<S>& grad_of(const std::shared_ptr<TensorImpl<S>>& impl) {
    if (impl->grad.size() != impl->data.size()) impl->grad.assign(impl->data.size(), S(0));
    return impl->grad;
}

}  // namespace gup
