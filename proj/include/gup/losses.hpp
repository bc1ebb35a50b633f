// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "gup/common.hpp"
#include "gup/tensor.hpp"

namespace gup {

namespace detail {

/// Joint axis is dim 1 for batched [N, J, H, W] maps and dim 0 for single
/// [J, H, W] maps.
inline std::size_t joint_dim_of(const Shape& s) {
    if (s.size() == 4) return 1;
    if (s.size() == 3) return 0;
    throw ShapeError("heatmap loss: expected rank 3 or 4, got " + shape_str(s));
}

}  // namespace detail

/// Mean squared error over the joint channels selected by mask (nonzero =
/// included). The mean is taken over every element of the included channels,
/// so the gradient is 2*(pred - target)/Nelem on those channels and zero
/// elsewhere.
template <class S>
Tensor<S> mse_heatmap_loss(const Tensor<S>& pred, const Tensor<S>& target, const std::vector<int>& joint_mask) {
    if (pred.shape() != target.shape())
        throw ShapeError("mse_heatmap_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    const std::size_t jd = detail::joint_dim_of(pred.shape());
    const std::size_t joints = pred.dim(jd);
    if (joint_mask.size() != joints)
        throw ShapeError("mse_heatmap_loss: mask length " + std::to_string(joint_mask.size()) + " for " +
                         std::to_string(joints) + " joints");
    const std::size_t batch = (jd == 1) ? pred.dim(0) : 1;
    const std::size_t plane = pred.dim(jd + 1) * pred.dim(jd + 2);

    std::size_t active = 0;
    for (int m : joint_mask)
        if (m != 0) ++active;
    if (active == 0) throw UsageError("mse_heatmap_loss: mask excludes every joint");
    const double nelem = static_cast<double>(batch * active * plane);

    double acc = 0.0;
    const S* p = pred.data().data();
    const S* t = target.data().data();
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t j = 0; j < joints; ++j) {
            if (joint_mask[j] == 0) continue;
            const std::size_t base = (n * joints + j) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = static_cast<double>(p[base + i]) - static_cast<double>(t[base + i]);
                acc += d * d;
            }
        }

    auto mask = joint_mask;
    return Tensor<S>::make_result(
        Shape{}, {static_cast<S>(acc / nelem)}, {pred, target},
        [pred, target, mask, batch, joints, plane, nelem](TensorImpl<S>& node) {
            const S g = node.grad[0];
            const double scale = 2.0 / nelem;
            std::vector<S>* gp = pred.requires_grad() ? &grad_of(pred.impl()) : nullptr;
            std::vector<S>* gt = target.requires_grad() ? &grad_of(target.impl()) : nullptr;
            const S* pd = pred.data().data();
            const S* td = target.data().data();
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t j = 0; j < joints; ++j) {
                    if (mask[j] == 0) continue;
                    const std::size_t base = (n * joints + j) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const S d = static_cast<S>(scale * (static_cast<double>(pd[base + i]) -
                                                            static_cast<double>(td[base + i])));
                        if (gp) (*gp)[base + i] += g * d;
                        if (gt) (*gt)[base + i] -= g * d;
                    }
                }
        });
}

/// Full-mask overload.
template <class S>
Tensor<S> mse_heatmap_loss(const Tensor<S>& pred, const Tensor<S>& target) {
    const std::size_t jd = detail::joint_dim_of(pred.shape());
    return mse_heatmap_loss(pred, target, std::vector<int>(pred.dim(jd), 1));
}

/// MSE between student and teacher maps with the teacher held constant:
/// gradients flow to the student only.
template <class S>
Tensor<S> output_distillation_loss(const Tensor<S>& student, const Tensor<S>& teacher) {
    return mse_heatmap_loss(student, teacher.detach());
}

/// A set of heatmap-producing candidates. The renderer maps a token index
/// plus an input context to a heatmap tensor of the target shape.
template <class S>
struct TokenCodebook {
    using Renderer = std::function<Tensor<S>(std::size_t token, const Tensor<S>& context)>;
    std::size_t size = 0;
    Renderer render;
};

/// Exhaustive scan for the token whose rendered heatmap is closest to the
/// target in MSE. Ties resolve to the smallest token index.
template <class S>
std::pair<std::size_t, double> select_token(const TokenCodebook<S>& codebook, const Tensor<S>& context,
                                            const Tensor<S>& target) {
    if (codebook.size == 0) throw UsageError("select_token: empty codebook");
    NoGradGuard guard;
    std::size_t best = 0;
    double best_mse = 0.0;
    for (std::size_t t = 0; t < codebook.size; ++t) {
        Tensor<S> rendered = codebook.render(t, context);
        const double m = static_cast<double>(mse_heatmap_loss(rendered, target).item());
        if (t == 0 || m < best_mse) {
            best = t;
            best_mse = m;
        }
    }
    return {best, best_mse};
}

}  // namespace gup
