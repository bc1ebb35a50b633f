// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "gup/ops.hpp"
#include "gup/params.hpp"

namespace gup {

/// Convolution layer owning its weight and optional bias.
template <class S>
struct ConvLayer {
    Tensor<S> weight;  // [out, in/groups, k, k]
    Tensor<S> bias;    // [out] or undefined
    Conv2dSpec spec;

    ConvLayer() = default;

    ConvLayer(std::uint64_t seed, const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t k,
              Conv2dSpec s, bool with_bias) {
        spec = s;
        const std::size_t fan_in = (in_ch / s.groups) * k * k;
        weight = init_fan_in_uniform<S>(seed, name + ".weight", {out_ch, in_ch / s.groups, k, k}, fan_in);
        if (with_bias) bias = init_constant<S>({out_ch}, S(0));
    }

    Tensor<S> forward(const Tensor<S>& x) const { return conv2d(x, weight, bias, spec); }

    void collect(const std::string& prefix, ParamList<S>& sink) const {
        sink.add(prefix + ".weight", weight, true);
        if (bias.defined()) sink.add(prefix + ".bias", bias, true);
    }
};

/// Transposed-convolution layer (decoder upsampling).
template <class S>
struct DeconvLayer {
    Tensor<S> weight;  // [in, out/groups, k, k]
    Tensor<S> bias;
    Conv2dSpec spec;

    DeconvLayer() = default;

    DeconvLayer(std::uint64_t seed, const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t k,
                Conv2dSpec s, bool with_bias) {
        spec = s;
        const std::size_t fan_in = (in_ch / s.groups) * k * k;
        weight = init_fan_in_uniform<S>(seed, name + ".weight", {in_ch, out_ch / s.groups, k, k}, fan_in);
        if (with_bias) bias = init_constant<S>({out_ch}, S(0));
    }

    Tensor<S> forward(const Tensor<S>& x) const { return transposed_conv2d(x, weight, bias, spec); }

    void collect(const std::string& prefix, ParamList<S>& sink) const {
        sink.add(prefix + ".weight", weight, true);
        if (bias.defined()) sink.add(prefix + ".bias", bias, true);
    }
};

/// Per-channel scale and shift derived from folding a batch-norm layer:
/// w' = w * gamma / sqrt(var + eps), b' = beta - mean * gamma / sqrt(var + eps).
template <class S>
struct NormFold {
    std::vector<S> scale;
    std::vector<S> shift;
};

template <class S>
struct BatchNormLayer {
    Tensor<S> gamma, beta;
    Tensor<S> running_mean, running_var;
    S eps = S(1e-5);
    S momentum = S(0.1);

    BatchNormLayer() = default;

    explicit BatchNormLayer(std::size_t channels) {
        gamma = init_constant<S>({channels}, S(1));
        beta = init_constant<S>({channels}, S(0));
        running_mean = init_constant<S>({channels}, S(0), false);
        running_var = init_constant<S>({channels}, S(1), false);
    }

    Tensor<S> forward(const Tensor<S>& x, bool training) {
        return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
    }

    NormFold<S> fold() const {
        NormFold<S> f;
        const std::size_t c = gamma.numel();
        f.scale.resize(c);
        f.shift.resize(c);
        for (std::size_t i = 0; i < c; ++i) {
            const S g = gamma.data()[i] / std::sqrt(running_var.data()[i] + eps);
            f.scale[i] = g;
            f.shift[i] = beta.data()[i] - running_mean.data()[i] * g;
        }
        return f;
    }

    void collect(const std::string& prefix, ParamList<S>& sink) const {
        sink.add(prefix + ".gamma", gamma, true);
        sink.add(prefix + ".beta", beta, true);
        sink.add(prefix + ".running_mean", running_mean, false);
        sink.add(prefix + ".running_var", running_var, false);
    }
};

template <class S>
struct LinearLayer {
    Tensor<S> weight;  // [out, in]
    Tensor<S> bias;

    LinearLayer() = default;

    LinearLayer(std::uint64_t seed, const std::string& name, std::size_t in_f, std::size_t out_f, bool with_bias) {
        weight = init_fan_in_uniform<S>(seed, name + ".weight", {out_f, in_f}, in_f);
        if (with_bias) bias = init_constant<S>({out_f}, S(0));
    }

    Tensor<S> forward(const Tensor<S>& x) const { return linear(x, weight, bias); }

    void collect(const std::string& prefix, ParamList<S>& sink) const {
        sink.add(prefix + ".weight", weight, true);
        if (bias.defined()) sink.add(prefix + ".bias", bias, true);
    }
};

}  // namespace gup
