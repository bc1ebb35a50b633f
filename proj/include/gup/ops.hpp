// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gup/common.hpp"
#include "gup/conv.hpp"
#include "gup/tensor.hpp"

namespace gup {

namespace detail {

template <class S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class S, class Fwd, class Bwd>
Tensor<S> unary_elementwise(const Tensor<S>& x, Fwd fwd, Bwd dfdx) {
    std::vector<S> out(x.numel());
    const auto& xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
    return Tensor<S>::make_result(x.shape(), std::move(out), {x}, [x, dfdx](TensorImpl<S>& node) {
        auto& gx = grad_of(x.impl());
        const auto& xv = x.data();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[i] * dfdx(xv[i]);
    });
}

}  // namespace detail

// --------------------------- elementwise -----------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor<S>::make_result(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl<S>& node) {
        if (a.requires_grad()) {
            auto& ga = grad_of(a.impl());
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i];
        }
        if (b.requires_grad()) {
            auto& gb = grad_of(b.impl());
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += node.grad[i];
        }
    });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return Tensor<S>::make_result(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl<S>& node) {
        if (a.requires_grad()) {
            auto& ga = grad_of(a.impl());
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i];
        }
        if (b.requires_grad()) {
            auto& gb = grad_of(b.impl());
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= node.grad[i];
        }
    });
}

/// Elementwise product; the gating primitive.
template <class S>
Tensor<S> hadamard(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "hadamard");
    std::vector<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor<S>::make_result(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl<S>& node) {
        if (a.requires_grad()) {
            auto& ga = grad_of(a.impl());
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i] * b.data()[i];
        }
        if (b.requires_grad()) {
            auto& gb = grad_of(b.impl());
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += node.grad[i] * a.data()[i];
        }
    });
}

template <class S>
Tensor<S> scale(const Tensor<S>& x, S c) {
    return detail::unary_elementwise(
        x, [c](S v) { return v * c; }, [c](S) { return c; });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    return detail::unary_elementwise(
        x, [](S v) { return S(1) / (S(1) + std::exp(-v)); },
        [](S v) {
            const S s = S(1) / (S(1) + std::exp(-v));
            return s * (S(1) - s);
        });
}

/// Exact GELU: 0.5 * x * (1 + erf(x / sqrt(2))).
template <class S>
Tensor<S> gelu(const Tensor<S>& x) {
    const S inv_sqrt2 = S(0.70710678118654752440084436210485L);
    const S inv_sqrt_2pi = S(0.39894228040143267793994605993438L);
    return detail::unary_elementwise(
        x, [=](S v) { return S(0.5) * v * (S(1) + std::erf(v * inv_sqrt2)); },
        [=](S v) {
            const S cdf = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
            const S pdf = inv_sqrt_2pi * std::exp(S(-0.5) * v * v);
            return cdf + v * pdf;
        });
}

// --------------------------- reductions ------------------------------------

template <class S>
Tensor<S> sum_all(const Tensor<S>& x) {
    S acc = S(0);
    for (S v : x.data()) acc += v;
    return Tensor<S>::make_result({1}, {acc}, {x}, [x](TensorImpl<S>& node) {
        auto& gx = grad_of(x.impl());
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[0];
    });
}

template <class S>
Tensor<S> mean_all(const Tensor<S>& x) {
    if (x.numel() == 0) throw UsageError("mean_all: empty tensor");
    S acc = S(0);
    for (S v : x.data()) acc += v;
    const S inv_n = S(1) / static_cast<S>(x.numel());
    return Tensor<S>::make_result({1}, {acc * inv_n}, {x}, [x, inv_n](TensorImpl<S>& node) {
        auto& gx = grad_of(x.impl());
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[0] * inv_n;
    });
}

/// [N, C, H, W] -> [N, C] spatial mean.
template <class S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
    if (x.rank() != 4) throw ShapeError("global_avg_pool: input must be 4-d, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<S> out(n * c);
    const S inv = S(1) / static_cast<S>(hw);
    for (std::size_t j = 0; j < n * c; ++j) {
        const S* plane = x.data().data() + j * hw;
        S acc = S(0);
        for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
        out[j] = acc * inv;
    }
    return Tensor<S>::make_result({n, c}, std::move(out), {x}, [x, hw, inv](TensorImpl<S>& node) {
        auto& gx = grad_of(x.impl());
        for (std::size_t j = 0; j < node.grad.size(); ++j) {
            const S g = node.grad[j] * inv;
            S* plane = gx.data() + j * hw;
            for (std::size_t i = 0; i < hw; ++i) plane[i] += g;
        }
    });
}

// --------------------------- linear / pooling ------------------------------

/// x: [N, Cin], weight: [Cout, Cin], bias: [Cout] or undefined.
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
    if (x.rank() != 2 || weight.rank() != 2)
        throw ShapeError("linear: need 2-d input and weight, got " + shape_str(x.shape()) + " and " +
                         shape_str(weight.shape()));
    const std::size_t n = x.dim(0), cin = x.dim(1), cout = weight.dim(0);
    if (weight.dim(1) != cin)
        throw ShapeError("linear: weight expects " + std::to_string(weight.dim(1)) + " features, input has " +
                         std::to_string(cin));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout))
        throw ShapeError("linear: bias must be [" + std::to_string(cout) + "], got " + shape_str(bias.shape()));
    std::vector<S> out(n * cout);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < cout; ++o) {
            S acc = bias.defined() ? bias.data()[o] : S(0);
            const S* xi = x.data().data() + i * cin;
            const S* wo = weight.data().data() + o * cin;
            for (std::size_t k = 0; k < cin; ++k) acc += xi[k] * wo[k];
            out[i * cout + o] = acc;
        }
    std::vector<Tensor<S>> parents = {x, weight};
    if (bias.defined()) parents.push_back(bias);
    return Tensor<S>::make_result({n, cout}, std::move(out), parents,
                                  [x, weight, bias, n, cin, cout](TensorImpl<S>& node) {
                                      if (x.requires_grad()) {
                                          auto& gx = grad_of(x.impl());
                                          for (std::size_t i = 0; i < n; ++i)
                                              for (std::size_t o = 0; o < cout; ++o) {
                                                  const S g = node.grad[i * cout + o];
                                                  const S* wo = weight.data().data() + o * cin;
                                                  for (std::size_t k = 0; k < cin; ++k) gx[i * cin + k] += g * wo[k];
                                              }
                                      }
                                      if (weight.requires_grad()) {
                                          auto& gw = grad_of(weight.impl());
                                          for (std::size_t i = 0; i < n; ++i)
                                              for (std::size_t o = 0; o < cout; ++o) {
                                                  const S g = node.grad[i * cout + o];
                                                  const S* xi = x.data().data() + i * cin;
                                                  for (std::size_t k = 0; k < cin; ++k) gw[o * cin + k] += g * xi[k];
                                              }
                                      }
                                      if (bias.defined() && bias.requires_grad()) {
                                          auto& gb = grad_of(bias.impl());
                                          for (std::size_t i = 0; i < n; ++i)
                                              for (std::size_t o = 0; o < cout; ++o) gb[o] += node.grad[i * cout + o];
                                      }
                                  });
}

/// Non-overlapping k x k average pooling; spatial dims must divide by k.
template <class S>
Tensor<S> avg_pool2d(const Tensor<S>& x, std::size_t k) {
    if (x.rank() != 4) throw ShapeError("avg_pool2d: input must be 4-d, got " + shape_str(x.shape()));
    if (k == 0) throw SpecError("avg_pool2d: window must be positive");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % k != 0 || w % k != 0)
        throw ShapeError("avg_pool2d: " + shape_str(x.shape()) + " not divisible by window " + std::to_string(k));
    const std::size_t ho = h / k, wo = w / k;
    const S inv = S(1) / static_cast<S>(k * k);
    std::vector<S> out(n * c * ho * wo);
    for (std::size_t j = 0; j < n * c; ++j) {
        const S* plane = x.data().data() + j * h * w;
        S* oplane = out.data() + j * ho * wo;
        for (std::size_t oh = 0; oh < ho; ++oh)
            for (std::size_t ow = 0; ow < wo; ++ow) {
                S acc = S(0);
                for (std::size_t di = 0; di < k; ++di)
                    for (std::size_t dj = 0; dj < k; ++dj) acc += plane[(oh * k + di) * w + ow * k + dj];
                oplane[oh * wo + ow] = acc * inv;
            }
    }
    return Tensor<S>::make_result({n, c, ho, wo}, std::move(out), {x}, [x, k, inv, n, c, h, w, ho, wo](TensorImpl<S>& node) {
        auto& gx = grad_of(x.impl());
        for (std::size_t j = 0; j < n * c; ++j) {
            S* plane = gx.data() + j * h * w;
            const S* gplane = node.grad.data() + j * ho * wo;
            for (std::size_t oh = 0; oh < ho; ++oh)
                for (std::size_t ow = 0; ow < wo; ++ow) {
                    const S g = gplane[oh * wo + ow] * inv;
                    for (std::size_t di = 0; di < k; ++di)
                        for (std::size_t dj = 0; dj < k; ++dj) plane[(oh * k + di) * w + ow * k + dj] += g;
                }
        }
    });
}

// --------------------------- channel plumbing ------------------------------

/// Per-(sample, channel) scaling: x [N, C, H, W] * s [N, C].
template <class S>
Tensor<S> scale_channels(const Tensor<S>& x, const Tensor<S>& s) {
    if (x.rank() != 4 || s.rank() != 2 || s.dim(0) != x.dim(0) || s.dim(1) != x.dim(1))
        throw ShapeError("scale_channels: got " + shape_str(x.shape()) + " and " + shape_str(s.shape()));
    const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<S> out(x.numel());
    for (std::size_t j = 0; j < nc; ++j) {
        const S f = s.data()[j];
        const S* plane = x.data().data() + j * hw;
        S* oplane = out.data() + j * hw;
        for (std::size_t i = 0; i < hw; ++i) oplane[i] = plane[i] * f;
    }
    return Tensor<S>::make_result(x.shape(), std::move(out), {x, s}, [x, s, nc, hw](TensorImpl<S>& node) {
        if (x.requires_grad()) {
            auto& gx = grad_of(x.impl());
            for (std::size_t j = 0; j < nc; ++j) {
                const S f = s.data()[j];
                const S* gplane = node.grad.data() + j * hw;
                S* plane = gx.data() + j * hw;
                for (std::size_t i = 0; i < hw; ++i) plane[i] += gplane[i] * f;
            }
        }
        if (s.requires_grad()) {
            auto& gs = grad_of(s.impl());
            for (std::size_t j = 0; j < nc; ++j) {
                const S* gplane = node.grad.data() + j * hw;
                const S* plane = x.data().data() + j * hw;
                S acc = S(0);
                for (std::size_t i = 0; i < hw; ++i) acc += gplane[i] * plane[i];
                gs[j] += acc;
            }
        }
    });
}

template <class S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw UsageError("concat_channels: no inputs");
    const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
    std::size_t ctotal = 0;
    for (const auto& p : parts) {
        if (p.rank() != 4 || p.dim(0) != n || p.dim(2) != h || p.dim(3) != w)
            throw ShapeError("concat_channels: incompatible part " + shape_str(p.shape()));
        ctotal += p.dim(1);
    }
    const std::size_t hw = h * w;
    std::vector<S> out(n * ctotal * hw);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t coff = 0;
        for (const auto& p : parts) {
            const std::size_t pc = p.dim(1);
            const S* src = p.data().data() + i * pc * hw;
            S* dst = out.data() + (i * ctotal + coff) * hw;
            std::copy(src, src + pc * hw, dst);
            coff += pc;
        }
    }
    return Tensor<S>::make_result({n, ctotal, h, w}, std::move(out), parts, [parts, n, ctotal, hw](TensorImpl<S>& node) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t coff = 0;
            for (const auto& p : parts) {
                const std::size_t pc = p.dim(1);
                if (p.requires_grad()) {
                    auto& gp = grad_of(p.impl());
                    const S* src = node.grad.data() + (i * ctotal + coff) * hw;
                    S* dst = gp.data() + i * pc * hw;
                    for (std::size_t e = 0; e < pc * hw; ++e) dst[e] += src[e];
                }
                coff += pc;
            }
        }
    });
}

template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    return concat_channels<S>({a, b});
}

// --------------------------- batch norm ------------------------------------

/// Batch normalization over (N, H, W) per channel.
///
/// Training mode normalizes with the biased batch variance and updates the
/// running buffers in place with momentum 0.1 (running variance uses the
/// unbiased estimate). Eval mode normalizes with the running buffers, which
/// makes it a fixed affine map foldable into a neighboring convolution.
template <class S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, Tensor<S>& running_mean,
                     Tensor<S>& running_var, bool training, S momentum = S(0.1), S eps = S(1e-5)) {
    if (x.rank() != 4) throw ShapeError("batch_norm: input must be 4-d, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t m = n * h * w;
    const std::size_t hw = h * w;
    if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c || running_var.numel() != c)
        throw ShapeError("batch_norm: parameter size must equal channel count " + std::to_string(c));

    std::vector<S> mean(c), var(c);
    if (training) {
        if (m < 2) throw UsageError("batch_norm: training mode needs more than one value per channel");
        for (std::size_t ch = 0; ch < c; ++ch) {
            S acc = S(0);
            for (std::size_t i = 0; i < n; ++i) {
                const S* plane = x.data().data() + (i * c + ch) * hw;
                for (std::size_t e = 0; e < hw; ++e) acc += plane[e];
            }
            mean[ch] = acc / static_cast<S>(m);
            S vacc = S(0);
            for (std::size_t i = 0; i < n; ++i) {
                const S* plane = x.data().data() + (i * c + ch) * hw;
                for (std::size_t e = 0; e < hw; ++e) {
                    const S d = plane[e] - mean[ch];
                    vacc += d * d;
                }
            }
            var[ch] = vacc / static_cast<S>(m);
            const S unbiased = vacc / static_cast<S>(m - 1);
            running_mean.data()[ch] = (S(1) - momentum) * running_mean.data()[ch] + momentum * mean[ch];
            running_var.data()[ch] = (S(1) - momentum) * running_var.data()[ch] + momentum * unbiased;
        }
    } else {
        mean = running_mean.data();
        var = running_var.data();
    }

    std::vector<S> inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = S(1) / std::sqrt(var[ch] + eps);

    std::vector<S> out(x.numel());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const S* plane = x.data().data() + (i * c + ch) * hw;
            S* oplane = out.data() + (i * c + ch) * hw;
            const S g = gamma.data()[ch] * inv_std[ch];
            const S b = beta.data()[ch] - mean[ch] * g;
            for (std::size_t e = 0; e < hw; ++e) oplane[e] = plane[e] * g + b;
        }

    return Tensor<S>::make_result(
        x.shape(), std::move(out), {x, gamma, beta},
        [x, gamma, beta, mean, inv_std, training, n, c, hw, m](TensorImpl<S>& node) {
            // dgamma and dbeta are plain reductions over x_hat. In training
            // mode the batch statistics depend on x, giving
            //   dx = gamma * inv_std * (dy - mean(dy) - x_hat * mean(dy * x_hat)).
            // In eval mode the statistics are constants and dx = gamma * inv_std * dy.
            const bool need_x = x.requires_grad();
            const bool need_g = gamma.requires_grad();
            const bool need_b = beta.requires_grad();
            for (std::size_t ch = 0; ch < c; ++ch) {
                const S istd = inv_std[ch];
                const S mu = mean[ch];
                S sum_dy = S(0), sum_dy_xhat = S(0);
                if (training || need_g || need_b) {
                    for (std::size_t i = 0; i < n; ++i) {
                        const S* gplane = node.grad.data() + (i * c + ch) * hw;
                        const S* plane = x.data().data() + (i * c + ch) * hw;
                        for (std::size_t e = 0; e < hw; ++e) {
                            sum_dy += gplane[e];
                            sum_dy_xhat += gplane[e] * (plane[e] - mu) * istd;
                        }
                    }
                }
                if (need_g) grad_of(gamma.impl())[ch] += sum_dy_xhat;
                if (need_b) grad_of(beta.impl())[ch] += sum_dy;
                if (need_x) {
                    auto& gx = grad_of(x.impl());
                    const S gscale = gamma.data()[ch] * istd;
                    const S mean_dy = sum_dy / static_cast<S>(m);
                    const S mean_dy_xhat = sum_dy_xhat / static_cast<S>(m);
                    for (std::size_t i = 0; i < n; ++i) {
                        const S* gplane = node.grad.data() + (i * c + ch) * hw;
                        const S* plane = x.data().data() + (i * c + ch) * hw;
                        S* xplane = gx.data() + (i * c + ch) * hw;
                        for (std::size_t e = 0; e < hw; ++e) {
                            if (training) {
                                const S xhat = (plane[e] - mu) * istd;
                                xplane[e] += gscale * (gplane[e] - mean_dy - xhat * mean_dy_xhat);
                            } else {
                                xplane[e] += gscale * gplane[e];
                            }
                        }
                    }
                }
            }
        });
}

// --------------------------- resampling ------------------------------------

/// Bilinear sampling at absolute pixel coordinates with clamp-to-edge
/// borders. x: [N, C, H, W]; coords: [N, 2, Ho, Wo] where channel 0 holds the
/// x (column) coordinate and channel 1 the y (row) coordinate. Differentiable
/// in both the source values and the coordinates.
template <class S>
Tensor<S> grid_sample_bilinear(const Tensor<S>& x, const Tensor<S>& coords) {
    if (x.rank() != 4 || coords.rank() != 4 || coords.dim(1) != 2 || coords.dim(0) != x.dim(0))
        throw ShapeError("grid_sample_bilinear: got " + shape_str(x.shape()) + " and " + shape_str(coords.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = coords.dim(2), wo = coords.dim(3);
    const std::size_t ohw = ho * wo;

    auto clamp_idx = [](std::ptrdiff_t v, std::size_t limit) {
        if (v < 0) return std::size_t(0);
        if (v >= static_cast<std::ptrdiff_t>(limit)) return limit - 1;
        return static_cast<std::size_t>(v);
    };

    std::vector<S> out(n * c * ohw);
    const std::uint64_t cost = static_cast<std::uint64_t>(out.size()) * 8;
    parallel_for(
        n * c,
        [&](std::size_t job) {
            const std::size_t i = job / c;
            const S* cx = coords.data().data() + (i * 2 + 0) * ohw;
            const S* cy = coords.data().data() + (i * 2 + 1) * ohw;
            const S* plane = x.data().data() + job * h * w;
            S* oplane = out.data() + job * ohw;
            for (std::size_t e = 0; e < ohw; ++e) {
                const double px = static_cast<double>(cx[e]);
                const double py = static_cast<double>(cy[e]);
                const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(px));
                const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(py));
                const S fx = static_cast<S>(px - static_cast<double>(x0));
                const S fy = static_cast<S>(py - static_cast<double>(y0));
                const std::size_t ix0 = clamp_idx(x0, w), ix1 = clamp_idx(x0 + 1, w);
                const std::size_t iy0 = clamp_idx(y0, h), iy1 = clamp_idx(y0 + 1, h);
                const S v00 = plane[iy0 * w + ix0], v01 = plane[iy0 * w + ix1];
                const S v10 = plane[iy1 * w + ix0], v11 = plane[iy1 * w + ix1];
                oplane[e] = (S(1) - fy) * ((S(1) - fx) * v00 + fx * v01) + fy * ((S(1) - fx) * v10 + fx * v11);
            }
        },
        cost);

    return Tensor<S>::make_result(
        {n, c, ho, wo}, std::move(out), {x, coords}, [x, coords, n, c, h, w, ho, wo, ohw, clamp_idx](TensorImpl<S>& node) {
            const bool need_x = x.requires_grad();
            const bool need_c = coords.requires_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const S* cx = coords.data().data() + (i * 2 + 0) * ohw;
                const S* cy = coords.data().data() + (i * 2 + 1) * ohw;
                S* gcx = need_c ? grad_of(coords.impl()).data() + (i * 2 + 0) * ohw : nullptr;
                S* gcy = need_c ? grad_of(coords.impl()).data() + (i * 2 + 1) * ohw : nullptr;
                for (std::size_t e = 0; e < ohw; ++e) {
                    const double px = static_cast<double>(cx[e]);
                    const double py = static_cast<double>(cy[e]);
                    const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(px));
                    const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(py));
                    const S fx = static_cast<S>(px - static_cast<double>(x0));
                    const S fy = static_cast<S>(py - static_cast<double>(y0));
                    const std::size_t ix0 = clamp_idx(x0, w), ix1 = clamp_idx(x0 + 1, w);
                    const std::size_t iy0 = clamp_idx(y0, h), iy1 = clamp_idx(y0 + 1, h);
                    S dpx = S(0), dpy = S(0);
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t plane_off = (i * c + ch) * h * w;
                        const S g = node.grad[(i * c + ch) * ohw + e];
                        const S* plane = x.data().data() + plane_off;
                        const S v00 = plane[iy0 * w + ix0], v01 = plane[iy0 * w + ix1];
                        const S v10 = plane[iy1 * w + ix0], v11 = plane[iy1 * w + ix1];
                        if (need_x) {
                            auto& gx = grad_of(x.impl());
                            gx[plane_off + iy0 * w + ix0] += g * (S(1) - fy) * (S(1) - fx);
                            gx[plane_off + iy0 * w + ix1] += g * (S(1) - fy) * fx;
                            gx[plane_off + iy1 * w + ix0] += g * fy * (S(1) - fx);
                            gx[plane_off + iy1 * w + ix1] += g * fy * fx;
                        }
                        if (need_c) {
                            dpx += g * ((S(1) - fy) * (v01 - v00) + fy * (v11 - v10));
                            dpy += g * ((S(1) - fx) * (v10 - v00) + fx * (v11 - v01));
                        }
                    }
                    if (need_c) {
                        gcx[e] += dpx;
                        gcy[e] += dpy;
                    }
                }
            }
        });
}

/// Fixed bilinear upsampling by an integer factor using the half-pixel
/// convention: output pixel o samples input position (o + 0.5) / s - 0.5 with
/// clamp-to-edge. Implemented directly so it can serve as an independent
/// reference for coordinate-based resamplers.
template <class S>
Tensor<S> bilinear_upsample(const Tensor<S>& x, std::size_t s) {
    if (x.rank() != 4) throw ShapeError("bilinear_upsample: input must be 4-d, got " + shape_str(x.shape()));
    if (s == 0) throw SpecError("bilinear_upsample: scale must be positive");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = h * s, wo = w * s;

    struct Tap {
        std::size_t i0, i1;
        S f;
    };
    auto make_taps = [s](std::size_t out_len, std::size_t in_len) {
        std::vector<Tap> taps(out_len);
        for (std::size_t o = 0; o < out_len; ++o) {
            const double pos = (static_cast<double>(o) + 0.5) / static_cast<double>(s) - 0.5;
            const double fl = std::floor(pos);
            const std::ptrdiff_t i0 = static_cast<std::ptrdiff_t>(fl);
            const std::ptrdiff_t i1 = i0 + 1;
            Tap t;
            t.f = static_cast<S>(pos - fl);
            t.i0 = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i0, 0, static_cast<std::ptrdiff_t>(in_len) - 1));
            t.i1 = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i1, 0, static_cast<std::ptrdiff_t>(in_len) - 1));
            taps[o] = t;
        }
        return taps;
    };
    const auto ty = make_taps(ho, h);
    const auto tx = make_taps(wo, w);

    std::vector<S> out(n * c * ho * wo);
    const std::uint64_t cost = static_cast<std::uint64_t>(out.size()) * 4;
    parallel_for(
        n * c,
        [&](std::size_t job) {
            const S* plane = x.data().data() + job * h * w;
            S* oplane = out.data() + job * ho * wo;
            for (std::size_t oy = 0; oy < ho; ++oy) {
                const Tap& a = ty[oy];
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const Tap& b = tx[ox];
                    const S top = (S(1) - b.f) * plane[a.i0 * w + b.i0] + b.f * plane[a.i0 * w + b.i1];
                    const S bot = (S(1) - b.f) * plane[a.i1 * w + b.i0] + b.f * plane[a.i1 * w + b.i1];
                    oplane[oy * wo + ox] = (S(1) - a.f) * top + a.f * bot;
                }
            }
        },
        cost);

    return Tensor<S>::make_result({n, c, ho, wo}, std::move(out), {x}, [x, ty, tx, n, c, h, w, ho, wo](TensorImpl<S>& node) {
        auto& gx = grad_of(x.impl());
        for (std::size_t job = 0; job < n * c; ++job) {
            S* plane = gx.data() + job * h * w;
            const S* gplane = node.grad.data() + job * ho * wo;
            for (std::size_t oy = 0; oy < ho; ++oy) {
                const Tap& a = ty[oy];
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const Tap& b = tx[ox];
                    const S g = gplane[oy * wo + ox];
                    plane[a.i0 * w + b.i0] += g * (S(1) - a.f) * (S(1) - b.f);
                    plane[a.i0 * w + b.i1] += g * (S(1) - a.f) * b.f;
                    plane[a.i1 * w + b.i0] += g * a.f * (S(1) - b.f);
                    plane[a.i1 * w + b.i1] += g * a.f * b.f;
                }
            }
        }
    });
}

}  // namespace gup
