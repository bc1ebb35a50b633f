// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gup/common.hpp"
#include "gup/tensor.hpp"

namespace gup {

/// Symmetric 2-d convolution hyperparameters. Cross-correlation semantics:
/// kernels are applied without flipping.
struct Conv2dSpec {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t dilation = 1;
    std::size_t groups = 1;
};

namespace detail {

struct ConvDims {
    std::size_t n, cin, h, w;
    std::size_t cout, cin_g, cout_g, kh, kw;
    std::size_t ho, wo;
};

template <class S>
ConvDims conv2d_dims(const Tensor<S>& x, const Tensor<S>& weight, const Conv2dSpec& spec) {
    if (x.rank() != 4) throw ShapeError("conv2d: input must be 4-d, got " + shape_str(x.shape()));
    if (weight.rank() != 4) throw ShapeError("conv2d: weight must be 4-d, got " + shape_str(weight.shape()));
    if (spec.stride == 0 || spec.dilation == 0 || spec.groups == 0)
        throw SpecError("conv2d: stride, dilation and groups must be positive");
    ConvDims d;
    d.n = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = weight.dim(0);
    d.kh = weight.dim(2);
    d.kw = weight.dim(3);
    if (d.cin % spec.groups != 0 || d.cout % spec.groups != 0)
        throw SpecError("conv2d: channels " + std::to_string(d.cin) + "/" + std::to_string(d.cout) +
                        " not divisible by groups " + std::to_string(spec.groups));
    d.cin_g = d.cin / spec.groups;
    d.cout_g = d.cout / spec.groups;
    if (weight.dim(1) != d.cin_g)
        throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                         " channels per group, input provides " + std::to_string(d.cin_g));
    const std::ptrdiff_t eff_kh = static_cast<std::ptrdiff_t>(spec.dilation * (d.kh - 1) + 1);
    const std::ptrdiff_t eff_kw = static_cast<std::ptrdiff_t>(spec.dilation * (d.kw - 1) + 1);
    const std::ptrdiff_t ho = (static_cast<std::ptrdiff_t>(d.h + 2 * spec.padding) - eff_kh) /
                                  static_cast<std::ptrdiff_t>(spec.stride) + 1;
    const std::ptrdiff_t wo = (static_cast<std::ptrdiff_t>(d.w + 2 * spec.padding) - eff_kw) /
                                  static_cast<std::ptrdiff_t>(spec.stride) + 1;
    if (ho <= 0 || wo <= 0)
        throw SpecError("conv2d: kernel does not fit the padded input (" + shape_str(x.shape()) +
                        " with " + shape_str(weight.shape()) + ")");
    d.ho = static_cast<std::size_t>(ho);
    d.wo = static_cast<std::size_t>(wo);
    return d;
}

template <class S>
std::vector<S> conv2d_forward_values(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                                     const Conv2dSpec& spec, const ConvDims& d) {
    std::vector<S> out(d.n * d.cout * d.ho * d.wo, S(0));
    const S* xp = x.data().data();
    const S* wp = weight.data().data();
    const S* bp = bias.defined() ? bias.data().data() : nullptr;
    S* op = out.data();
    const std::uint64_t cost = static_cast<std::uint64_t>(out.size()) * d.cin_g * d.kh * d.kw;
    parallel_for(
        d.n * d.cout,
        [&](std::size_t job) {
            const std::size_t n = job / d.cout;
            const std::size_t oc = job % d.cout;
            const std::size_t g = oc / d.cout_g;
            const S* wbase = wp + oc * d.cin_g * d.kh * d.kw;
            S* obase = op + (n * d.cout + oc) * d.ho * d.wo;
            for (std::size_t oh = 0; oh < d.ho; ++oh) {
                for (std::size_t ow = 0; ow < d.wo; ++ow) {
                    S acc = bp ? bp[oc] : S(0);
                    for (std::size_t icg = 0; icg < d.cin_g; ++icg) {
                        const std::size_t ic = g * d.cin_g + icg;
                        const S* xplane = xp + (n * d.cin + ic) * d.h * d.w;
                        const S* wrow = wbase + icg * d.kh * d.kw;
                        for (std::size_t ki = 0; ki < d.kh; ++ki) {
                            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * spec.stride + ki * spec.dilation) -
                                                      static_cast<std::ptrdiff_t>(spec.padding);
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.h)) continue;
                            for (std::size_t kj = 0; kj < d.kw; ++kj) {
                                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * spec.stride + kj * spec.dilation) -
                                                          static_cast<std::ptrdiff_t>(spec.padding);
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(d.w)) continue;
                                acc += xplane[static_cast<std::size_t>(ih) * d.w + static_cast<std::size_t>(iw)] *
                                       wrow[ki * d.kw + kj];
                            }
                        }
                    }
                    obase[oh * d.wo + ow] = acc;
                }
            }
        },
        cost);
    return out;
}

// Gradient w.r.t. the convolution input: gather form of the transposed pass.
template <class S>
std::vector<S> conv2d_grad_input_values(const std::vector<S>& gout, const Tensor<S>& weight,
                                        const Conv2dSpec& spec, const ConvDims& d) {
    std::vector<S> gx(d.n * d.cin * d.h * d.w, S(0));
    const S* gp = gout.data();
    const S* wp = weight.data().data();
    S* xp = gx.data();
    const std::uint64_t cost = static_cast<std::uint64_t>(gx.size()) * d.cout_g * d.kh * d.kw;
    parallel_for(
        d.n * d.cin,
        [&](std::size_t job) {
            const std::size_t n = job / d.cin;
            const std::size_t ic = job % d.cin;
            const std::size_t g = ic / d.cin_g;
            const std::size_t icg = ic % d.cin_g;
            S* xplane = xp + (n * d.cin + ic) * d.h * d.w;
            for (std::size_t ih = 0; ih < d.h; ++ih) {
                for (std::size_t iw = 0; iw < d.w; ++iw) {
                    S acc = S(0);
                    for (std::size_t ocg = 0; ocg < d.cout_g; ++ocg) {
                        const std::size_t oc = g * d.cout_g + ocg;
                        const S* gplane = gp + (n * d.cout + oc) * d.ho * d.wo;
                        const S* wrow = wp + (oc * d.cin_g + icg) * d.kh * d.kw;
                        for (std::size_t ki = 0; ki < d.kh; ++ki) {
                            const std::ptrdiff_t num_h = static_cast<std::ptrdiff_t>(ih + spec.padding) -
                                                         static_cast<std::ptrdiff_t>(ki * spec.dilation);
                            if (num_h < 0 || num_h % static_cast<std::ptrdiff_t>(spec.stride) != 0) continue;
                            const std::size_t oh = static_cast<std::size_t>(num_h) / spec.stride;
                            if (oh >= d.ho) continue;
                            for (std::size_t kj = 0; kj < d.kw; ++kj) {
                                const std::ptrdiff_t num_w = static_cast<std::ptrdiff_t>(iw + spec.padding) -
                                                             static_cast<std::ptrdiff_t>(kj * spec.dilation);
                                if (num_w < 0 || num_w % static_cast<std::ptrdiff_t>(spec.stride) != 0) continue;
                                const std::size_t ow = static_cast<std::size_t>(num_w) / spec.stride;
                                if (ow >= d.wo) continue;
                                acc += gplane[oh * d.wo + ow] * wrow[ki * d.kw + kj];
                            }
                        }
                    }
                    xplane[ih * d.w + iw] = acc;
                }
            }
        },
        cost);
    return gx;
}

template <class S>
std::vector<S> conv2d_grad_weight_values(const std::vector<S>& gout, const Tensor<S>& x,
                                         const Conv2dSpec& spec, const ConvDims& d) {
    std::vector<S> gw(d.cout * d.cin_g * d.kh * d.kw, S(0));
    const S* gp = gout.data();
    const S* xp = x.data().data();
    S* wp = gw.data();
    const std::uint64_t cost = static_cast<std::uint64_t>(gw.size()) * d.n * d.ho * d.wo;
    parallel_for(
        d.cout,
        [&](std::size_t oc) {
            const std::size_t g = oc / d.cout_g;
            for (std::size_t icg = 0; icg < d.cin_g; ++icg) {
                const std::size_t ic = g * d.cin_g + icg;
                for (std::size_t ki = 0; ki < d.kh; ++ki) {
                    for (std::size_t kj = 0; kj < d.kw; ++kj) {
                        S acc = S(0);
                        for (std::size_t n = 0; n < d.n; ++n) {
                            const S* gplane = gp + (n * d.cout + oc) * d.ho * d.wo;
                            const S* xplane = xp + (n * d.cin + ic) * d.h * d.w;
                            for (std::size_t oh = 0; oh < d.ho; ++oh) {
                                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * spec.stride + ki * spec.dilation) -
                                                          static_cast<std::ptrdiff_t>(spec.padding);
                                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.h)) continue;
                                for (std::size_t ow = 0; ow < d.wo; ++ow) {
                                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * spec.stride + kj * spec.dilation) -
                                                              static_cast<std::ptrdiff_t>(spec.padding);
                                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(d.w)) continue;
                                    acc += gplane[oh * d.wo + ow] *
                                           xplane[static_cast<std::size_t>(ih) * d.w + static_cast<std::size_t>(iw)];
                                }
                            }
                        }
                        wp[((oc * d.cin_g + icg) * d.kh + ki) * d.kw + kj] = acc;
                    }
                }
            }
        },
        cost);
    return gw;
}

template <class S>
std::vector<S> conv2d_grad_bias_values(const std::vector<S>& gout, const ConvDims& d) {
    std::vector<S> gb(d.cout, S(0));
    for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t oc = 0; oc < d.cout; ++oc) {
            const S* gplane = gout.data() + (n * d.cout + oc) * d.ho * d.wo;
            S acc = S(0);
            for (std::size_t i = 0; i < d.ho * d.wo; ++i) acc += gplane[i];
            gb[oc] += acc;
        }
    return gb;
}

inline void accumulate_into(auto& dst, const auto& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

/// 2-d convolution. x: [N, Cin, H, W], weight: [Cout, Cin/groups, kh, kw],
/// bias: [Cout] or an undefined tensor for none.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias, const Conv2dSpec& spec = {}) {
    const detail::ConvDims d = detail::conv2d_dims(x, weight, spec);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.cout))
        throw ShapeError("conv2d: bias must be [" + std::to_string(d.cout) + "], got " + shape_str(bias.shape()));
    std::vector<S> out = detail::conv2d_forward_values(x, weight, bias, spec, d);

    std::vector<Tensor<S>> parents = {x, weight};
    if (bias.defined()) parents.push_back(bias);
    return Tensor<S>::make_result(
        {d.n, d.cout, d.ho, d.wo}, std::move(out), parents, [x, weight, bias, spec, d](TensorImpl<S>& node) {
            if (x.requires_grad())
                detail::accumulate_into(grad_of(x.impl()), detail::conv2d_grad_input_values(node.grad, weight, spec, d));
            if (weight.requires_grad())
                detail::accumulate_into(grad_of(weight.impl()), detail::conv2d_grad_weight_values(node.grad, x, spec, d));
            if (bias.defined() && bias.requires_grad())
                detail::accumulate_into(grad_of(bias.impl()), detail::conv2d_grad_bias_values(node.grad, d));
        });
}

template <class S>
struct Conv2dGrads {
    Tensor<S> grad_input;
    Tensor<S> grad_weight;
    Tensor<S> grad_bias;  // undefined when the forward pass had no bias
};

/// Standalone vector-Jacobian product of conv2d, usable without the tape.
template <class S>
Conv2dGrads<S> conv2d_backward(const Tensor<S>& grad_out, const Tensor<S>& x, const Tensor<S>& weight,
                               const Conv2dSpec& spec, bool has_bias) {
    const detail::ConvDims d = detail::conv2d_dims(x, weight, spec);
    const Shape want = {d.n, d.cout, d.ho, d.wo};
    if (grad_out.shape() != want)
        throw ShapeError("conv2d_backward: grad_out must be " + shape_str(want) + ", got " + shape_str(grad_out.shape()));
    Conv2dGrads<S> g;
    g.grad_input = Tensor<S>::from_vector({d.n, d.cin, d.h, d.w},
                                          detail::conv2d_grad_input_values(grad_out.data(), weight, spec, d));
    g.grad_weight = Tensor<S>::from_vector({d.cout, d.cin_g, d.kh, d.kw},
                                           detail::conv2d_grad_weight_values(grad_out.data(), x, spec, d));
    if (has_bias) g.grad_bias = Tensor<S>::from_vector({d.cout}, detail::conv2d_grad_bias_values(grad_out.data(), d));
    return g;
}

// ---------------------------------------------------------------------------
// Transposed convolution. x: [N, Cin, H, W], weight: [Cin, Cout/groups, kh, kw].
// Output height is (H-1)*stride - 2*padding + dilation*(kh-1) + 1. With
// matching specs this operator is the exact adjoint of conv2d, so
// <conv2d(x, w), y> == <x, transposed_conv2d(y, w)>.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> transposed_conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                            const Conv2dSpec& spec = {}) {
    if (x.rank() != 4) throw ShapeError("transposed_conv2d: input must be 4-d, got " + shape_str(x.shape()));
    if (weight.rank() != 4)
        throw ShapeError("transposed_conv2d: weight must be 4-d, got " + shape_str(weight.shape()));
    if (spec.stride == 0 || spec.dilation == 0 || spec.groups == 0)
        throw SpecError("transposed_conv2d: stride, dilation and groups must be positive");
    const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t kh = weight.dim(2), kw = weight.dim(3);
    if (cin != weight.dim(0))
        throw ShapeError("transposed_conv2d: weight expects " + std::to_string(weight.dim(0)) +
                         " input channels, got " + std::to_string(cin));
    if (cin % spec.groups != 0) throw SpecError("transposed_conv2d: input channels not divisible by groups");
    const std::size_t cin_g = cin / spec.groups;
    const std::size_t cout_g = weight.dim(1);
    const std::size_t cout = cout_g * spec.groups;
    const std::ptrdiff_t ho_s = static_cast<std::ptrdiff_t>((h - 1) * spec.stride) -
                                static_cast<std::ptrdiff_t>(2 * spec.padding) +
                                static_cast<std::ptrdiff_t>(spec.dilation * (kh - 1)) + 1;
    const std::ptrdiff_t wo_s = static_cast<std::ptrdiff_t>((w - 1) * spec.stride) -
                                static_cast<std::ptrdiff_t>(2 * spec.padding) +
                                static_cast<std::ptrdiff_t>(spec.dilation * (kw - 1)) + 1;
    if (ho_s <= 0 || wo_s <= 0) throw SpecError("transposed_conv2d: output would be empty");
    const std::size_t ho = static_cast<std::size_t>(ho_s), wo = static_cast<std::size_t>(wo_s);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout))
        throw ShapeError("transposed_conv2d: bias must be [" + std::to_string(cout) + "], got " +
                         shape_str(bias.shape()));

    // Reuse the conv gradient kernels: transposed_conv2d(x, w) is exactly the
    // input-gradient of a conv2d whose output grad is x, with the weight seen
    // as [Cout_fwd=cin, Cin_fwd/groups=cout_g, kh, kw].
    detail::ConvDims cd;
    cd.n = n;
    cd.cin = cout;
    cd.h = ho;
    cd.w = wo;
    cd.cout = cin;
    cd.cin_g = cout_g;
    cd.cout_g = cin_g;
    cd.kh = kh;
    cd.kw = kw;
    cd.ho = h;
    cd.wo = w;

    std::vector<S> out = detail::conv2d_grad_input_values(x.data(), weight, spec, cd);
    if (bias.defined()) {
        const S* bp = bias.data().data();
        parallel_for(n * cout, [&](std::size_t job) {
            const std::size_t oc = job % cout;
            S* plane = out.data() + job * ho * wo;
            for (std::size_t i = 0; i < ho * wo; ++i) plane[i] += bp[oc];
        });
    }

    std::vector<Tensor<S>> parents = {x, weight};
    if (bias.defined()) parents.push_back(bias);
    return Tensor<S>::make_result(
        {n, cout, ho, wo}, std::move(out), parents, [x, weight, bias, spec, cd](TensorImpl<S>& node) {
            // Through the adjoint relation the roles flip back: the gradient
            // w.r.t. x is a forward conv of node.grad, the gradient w.r.t. w
            // correlates node.grad with x.
            if (x.requires_grad()) {
                Tensor<S> gout = Tensor<S>::from_vector({cd.n, cd.cin, cd.h, cd.w}, node.grad);
                detail::accumulate_into(grad_of(x.impl()), detail::conv2d_forward_values(gout, weight, Tensor<S>(), spec, cd));
            }
            if (weight.requires_grad()) {
                Tensor<S> gout = Tensor<S>::from_vector({cd.n, cd.cin, cd.h, cd.w}, node.grad);
                detail::accumulate_into(grad_of(weight.impl()), detail::conv2d_grad_weight_values(x.data(), gout, spec, cd));
            }
            if (bias.defined() && bias.requires_grad()) {
                auto& gb = grad_of(bias.impl());
                for (std::size_t nn = 0; nn < cd.n; ++nn)
                    for (std::size_t oc = 0; oc < cd.cin; ++oc) {
                        const S* plane = node.grad.data() + (nn * cd.cin + oc) * cd.h * cd.w;
                        S acc = S(0);
                        for (std::size_t i = 0; i < cd.h * cd.w; ++i) acc += plane[i];
                        gb[oc] += acc;
                    }
            }
        });
}

}  // namespace gup
