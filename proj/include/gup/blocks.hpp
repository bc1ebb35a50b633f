// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gup/layers.hpp"
#include "gup/ops.hpp"

namespace gup {

// ---------------------------------------------------------------------------
// Gated convolution: sigmoid(conv(x, W_g)) ⊙ conv(x, W_v). Both branches
// share one conv spec so their outputs align elementwise.
// ---------------------------------------------------------------------------

template <class S>
struct GatedConvLayer {
    std::string name;
    ConvLayer<S> gate, value;

    GatedConvLayer() = default;

    GatedConvLayer(std::uint64_t seed, std::string name_, std::size_t in_ch, std::size_t out_ch, std::size_t k,
                   Conv2dSpec spec)
        : name(std::move(name_)),
          gate(seed, name + ".gate", in_ch, out_ch, k, spec, true),
          value(seed, name + ".value", in_ch, out_ch, k, spec, true) {}

    Tensor<S> forward(const Tensor<S>& x) const { return hadamard(sigmoid(gate.forward(x)), value.forward(x)); }

    void collect(ParamList<S>& sink) const {
        gate.collect(name + ".gate", sink);
        value.collect(name + ".value", sink);
    }
};

// ---------------------------------------------------------------------------
// Dilated reparameterization: a K x K depthwise kernel trained alongside
// small dilated depthwise branches, merged at deploy time into a single
// dense K x K kernel with identical eval-mode function.
// ---------------------------------------------------------------------------

/// Spreads a k x k depthwise weight into its dense equivalent of extent
/// (k-1)*r+1, taps at positions (i*r, j*r), zeros elsewhere.
template <class S>
Tensor<S> dilated_to_dense(const Tensor<S>& weight, std::size_t r) {
    if (weight.rank() != 4 || weight.dim(1) != 1)
        throw ShapeError("dilated_to_dense: expected depthwise weight [C,1,k,k], got " + shape_str(weight.shape()));
    const std::size_t c = weight.dim(0), k = weight.dim(2);
    if (k % 2 == 0) throw SpecError("dilated_to_dense: kernel size must be odd, got " + std::to_string(k));
    if (r == 0) throw SpecError("dilated_to_dense: dilation must be positive");
    if (weight.dim(3) != k) throw ShapeError("dilated_to_dense: kernel must be square");
    const std::size_t e = (k - 1) * r + 1;
    Tensor<S> dense({c, 1, e, e});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                dense.at(ch, 0, i * r, j * r) = weight.at(ch, 0, i, j);
    return dense;
}

struct BranchSpec {
    std::size_t k;
    std::size_t r;
};

/// Default branch sets mirroring the large-kernel reparam construction this
/// block follows. All extents (k-1)*r+1 stay within the main kernel.
inline std::vector<BranchSpec> default_reparam_branches(std::size_t K) {
    if (K >= 13) return {{5, 1}, {7, 2}, {3, 3}, {3, 4}, {3, 5}};
    if (K >= 9) return {{5, 1}, {3, 2}, {3, 3}, {3, 4}};
    return {{5, 1}, {3, 2}, {3, 3}};
}

template <class S>
struct DilatedReparamBranch {
    std::size_t k = 0, r = 1;
    ConvLayer<S> conv;
    BatchNormLayer<S> norm;
};

template <class S>
struct DilatedReparamBlock {
    std::string name;
    std::size_t channels = 0, K = 0;
    ConvLayer<S> main;
    BatchNormLayer<S> main_norm;
    std::vector<DilatedReparamBranch<S>> branches;
    bool deployed = false;
    ConvLayer<S> merged;

    DilatedReparamBlock() = default;

    DilatedReparamBlock(std::uint64_t seed, std::string name_, std::size_t channels_, std::size_t K_,
                        std::vector<BranchSpec> specs)
        : name(std::move(name_)), channels(channels_), K(K_) {
        if (K % 2 == 0 || K < 7) throw SpecError("reparam block: main kernel must be odd and >= 7, got " + std::to_string(K));
        Conv2dSpec ms{1, (K - 1) / 2, 1, channels};
        main = ConvLayer<S>(seed, name + ".main", channels, channels, K, ms, false);
        main_norm = BatchNormLayer<S>(channels);
        std::size_t idx = 0;
        for (const BranchSpec& bs : specs) {
            if (bs.k % 2 == 0) throw SpecError("reparam branch: kernel size must be odd, got " + std::to_string(bs.k));
            const std::size_t extent = (bs.k - 1) * bs.r + 1;
            if (extent > K)
                throw SpecError("reparam branch: equivalent extent " + std::to_string(extent) +
                                " exceeds main kernel " + std::to_string(K));
            DilatedReparamBranch<S> br;
            br.k = bs.k;
            br.r = bs.r;
            Conv2dSpec cs{1, ((bs.k - 1) * bs.r) / 2, bs.r, channels};
            br.conv = ConvLayer<S>(seed, name + ".branch" + std::to_string(idx), channels, channels, bs.k, cs, false);
            br.norm = BatchNormLayer<S>(channels);
            branches.push_back(std::move(br));
            ++idx;
        }
    }

    Tensor<S> forward(const Tensor<S>& x, bool training) {
        if (deployed) return merged.forward(x);
        Tensor<S> acc = main_norm.forward(main.forward(x), training);
        for (auto& br : branches) acc = add(acc, br.norm.forward(br.conv.forward(x), training));
        return acc;
    }

    /// Folds every branch norm into its conv, densifies dilated kernels,
    /// pads them to K x K and sums everything into one depthwise conv.
    void merge() {
        if (deployed) throw StateError("reparam block " + name + ": already deployed");
        Tensor<S> w({channels, 1, K, K});
        std::vector<S> b(channels, S(0));

        auto accumulate = [&](const Tensor<S>& branch_w, const NormFold<S>& fold) {
            const std::size_t e = branch_w.dim(2);
            const std::size_t off = (K - e) / 2;
            for (std::size_t ch = 0; ch < channels; ++ch) {
                for (std::size_t i = 0; i < e; ++i)
                    for (std::size_t j = 0; j < e; ++j)
                        w.at(ch, 0, i + off, j + off) += fold.scale[ch] * branch_w.at(ch, 0, i, j);
                b[ch] += fold.shift[ch];
            }
        };

        accumulate(main.weight, main_norm.fold());
        for (const auto& br : branches) accumulate(dilated_to_dense(br.conv.weight, br.r), br.norm.fold());

        merged = ConvLayer<S>();
        merged.spec = Conv2dSpec{1, (K - 1) / 2, 1, channels};
        merged.weight = w;
        merged.weight.set_requires_grad(true);
        merged.bias = Tensor<S>::from_vector({channels}, std::move(b));
        merged.bias.set_requires_grad(true);

        main = ConvLayer<S>();
        main_norm = BatchNormLayer<S>();
        branches.clear();
        deployed = true;
    }

    void collect(ParamList<S>& sink) const {
        if (deployed) {
            merged.collect(name + ".merged", sink);
            return;
        }
        main.collect(name + ".main", sink);
        main_norm.collect(name + ".main_norm", sink);
        for (std::size_t i = 0; i < branches.size(); ++i) {
            branches[i].conv.collect(name + ".branch" + std::to_string(i), sink);
            branches[i].norm.collect(name + ".branch" + std::to_string(i) + "_norm", sink);
        }
    }
};

// ---------------------------------------------------------------------------
// Downsampling embed: a short stack of 3x3 conv + norm + GELU units whose
// strides multiply to total_stride. The stem uses the two-unit channel
// schedule in -> out/2 -> out; per-stage downsampling uses a single unit.
// ---------------------------------------------------------------------------

template <class S>
struct GlaceEmbed {
    struct Unit {
        ConvLayer<S> conv;
        BatchNormLayer<S> norm;
    };
    std::string name;
    std::vector<Unit> units;
    std::size_t total_stride = 1;

    GlaceEmbed() = default;

    struct UnitSpec {
        std::size_t in, out, stride;
    };

    GlaceEmbed(std::uint64_t seed, std::string name_, const std::vector<UnitSpec>& schedule) : name(std::move(name_)) {
        std::size_t idx = 0;
        for (const UnitSpec& u : schedule) {
            Unit unit;
            unit.conv = ConvLayer<S>(seed, name + ".conv" + std::to_string(idx), u.in, u.out, 3,
                                     Conv2dSpec{u.stride, 1, 1, 1}, false);
            unit.norm = BatchNormLayer<S>(u.out);
            units.push_back(std::move(unit));
            total_stride *= u.stride;
            ++idx;
        }
    }

    static GlaceEmbed stem(std::uint64_t seed, std::string name, std::size_t in_ch, std::size_t out_ch) {
        const std::size_t mid = std::max<std::size_t>(1, out_ch / 2);
        return GlaceEmbed(seed, std::move(name), {{in_ch, mid, 2}, {mid, out_ch, 1}});
    }

    static GlaceEmbed downsample(std::uint64_t seed, std::string name, std::size_t in_ch, std::size_t out_ch) {
        return GlaceEmbed(seed, std::move(name), {{in_ch, out_ch, 2}});
    }

    Tensor<S> forward(const Tensor<S>& x, bool training) {
        if (x.dim(2) % total_stride != 0 || x.dim(3) % total_stride != 0)
            throw ShapeError("downsample embed " + name + ": input " + shape_str(x.shape()) +
                             " not divisible by stride " + std::to_string(total_stride));
        Tensor<S> h = x;
        for (auto& u : units) h = gelu(u.norm.forward(u.conv.forward(h), training));
        return h;
    }

    void collect(ParamList<S>& sink) const {
        for (std::size_t i = 0; i < units.size(); ++i) {
            units[i].conv.collect(name + ".conv" + std::to_string(i), sink);
            units[i].norm.collect(name + ".norm" + std::to_string(i), sink);
        }
    }
};

// ---------------------------------------------------------------------------
// Squeeze-excite channel attention: global average pool, bottleneck MLP,
// sigmoid gate, per-channel rescale.
// ---------------------------------------------------------------------------

template <class S>
struct SqueezeExcite {
    std::string name;
    LinearLayer<S> reduce, expand;

    SqueezeExcite() = default;

    SqueezeExcite(std::uint64_t seed, std::string name_, std::size_t channels, std::size_t ratio = 4)
        : name(std::move(name_)) {
        const std::size_t hidden = std::max<std::size_t>(1, channels / ratio);
        reduce = LinearLayer<S>(seed, name + ".reduce", channels, hidden, true);
        expand = LinearLayer<S>(seed, name + ".expand", hidden, channels, true);
    }

    Tensor<S> forward(const Tensor<S>& x) const {
        Tensor<S> s = global_avg_pool(x);
        Tensor<S> e = sigmoid(expand.forward(gelu(reduce.forward(s))));
        return scale_channels(x, e);
    }

    void collect(ParamList<S>& sink) const {
        reduce.collect(name + ".reduce", sink);
        expand.collect(name + ".expand", sink);
    }
};

// ---------------------------------------------------------------------------
// DySample: content-aware upsampling. A 1x1 conv predicts 2*s^2 offset
// channels per input position (one x and one y offset for each of the s^2
// output sub-positions); offsets are scaled by offset_range, clamped to
// +/- offset_range * s input pixels, added to the regular half-pixel
// upsampling grid, and sampled bilinearly. Zero offsets make it exactly the
// fixed bilinear upsampler.
// ---------------------------------------------------------------------------

/// Builds absolute sample coordinates [N, 2, H*s, W*s] from raw offset
/// predictions [N, 2*s^2, H, W]. Differentiable in the offsets.
template <class S>
Tensor<S> dysample_coords(const Tensor<S>& raw, std::size_t s, S offset_range) {
    if (raw.rank() != 4 || raw.dim(1) != 2 * s * s)
        throw ShapeError("dysample_coords: expected [N," + std::to_string(2 * s * s) + ",H,W], got " +
                         shape_str(raw.shape()));
    const std::size_t n = raw.dim(0), h = raw.dim(2), w = raw.dim(3);
    const std::size_t ho = h * s, wo = w * s;
    const S lim = offset_range * static_cast<S>(s);

    std::vector<S> out(n * 2 * ho * wo);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::size_t iy = oy / s, ix = ox / s;
                const std::size_t g = (oy % s) * s + (ox % s);
                const S rx = raw.at(i, g, iy, ix);
                const S ry = raw.at(i, s * s + g, iy, ix);
                const S offx = std::clamp(offset_range * rx, -lim, lim);
                const S offy = std::clamp(offset_range * ry, -lim, lim);
                const S base_x = (static_cast<S>(ox) + S(0.5)) / static_cast<S>(s) - S(0.5);
                const S base_y = (static_cast<S>(oy) + S(0.5)) / static_cast<S>(s) - S(0.5);
                out[((i * 2 + 0) * ho + oy) * wo + ox] = base_x + offx;
                out[((i * 2 + 1) * ho + oy) * wo + ox] = base_y + offy;
            }

    return Tensor<S>::make_result(
        {n, 2, ho, wo}, std::move(out), {raw}, [raw, s, offset_range, lim, n, ho, wo](TensorImpl<S>& node) {
            auto& gr = grad_of(raw.impl());
            const std::size_t h = raw.dim(2), w = raw.dim(3);
            const std::size_t ss = s * s;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t oy = 0; oy < ho; ++oy)
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const std::size_t iy = oy / s, ix = ox / s;
                        const std::size_t g = (oy % s) * s + (ox % s);
                        const S rx = raw.at(i, g, iy, ix);
                        const S ry = raw.at(i, ss + g, iy, ix);
                        const S gx = node.grad[((i * 2 + 0) * ho + oy) * wo + ox];
                        const S gy = node.grad[((i * 2 + 1) * ho + oy) * wo + ox];
                        // Clamped offsets stop the gradient.
                        if (std::abs(offset_range * rx) < lim)
                            gr[((i * (2 * ss) + g) * h + iy) * w + ix] += offset_range * gx;
                        if (std::abs(offset_range * ry) < lim)
                            gr[((i * (2 * ss) + ss + g) * h + iy) * w + ix] += offset_range * gy;
                    }
        });
}

template <class S>
struct DySampleUpsampler {
    std::string name;
    std::size_t scale = 2;
    S offset_range = S(0.25);
    ConvLayer<S> offset;

    DySampleUpsampler() = default;

    DySampleUpsampler(std::uint64_t seed, std::string name_, std::size_t channels, std::size_t scale_)
        : name(std::move(name_)), scale(scale_) {
        if (scale < 2) throw SpecError("dysample: scale must be >= 2, got " + std::to_string(scale));
        offset = ConvLayer<S>(seed, name + ".offset", channels, 2 * scale * scale, 1, Conv2dSpec{}, true);
        // Zero start: the upsampler begins as exact bilinear interpolation.
        std::fill(offset.weight.data().begin(), offset.weight.data().end(), S(0));
    }

    Tensor<S> forward(const Tensor<S>& x) const {
        Tensor<S> coords = dysample_coords(offset.forward(x), scale, offset_range);
        return grid_sample_bilinear(x, coords);
    }

    void collect(ParamList<S>& sink) const { offset.collect(name + ".offset", sink); }
};

// ---------------------------------------------------------------------------
// The composite residual block: depthwise spatial mixer (reparam form for
// kernels >= 7, plain depthwise otherwise), squeeze-excite, then a pointwise
// gated feed-forward with expansion 4 (or a plain GELU feed-forward when
// gating is ablated). Shape-preserving.
// ---------------------------------------------------------------------------

template <class S>
struct GatedUniPoseBlock {
    std::string name;
    std::size_t channels = 0, kernel_size = 0;
    bool use_gconv = true;

    DilatedReparamBlock<S> drb;
    ConvLayer<S> dw;
    BatchNormLayer<S> norm1, norm2;
    SqueezeExcite<S> se;
    GatedConvLayer<S> ffn_gconv;  // gate/value 1x1, C -> 4C
    ConvLayer<S> ffn_proj;        // 4C -> C
    ConvLayer<S> ffn_fc1, ffn_fc2;

    GatedUniPoseBlock() = default;

    GatedUniPoseBlock(std::uint64_t seed, std::string name_, std::size_t channels_, std::size_t kernel_size_,
                      bool use_gconv_, std::size_t expansion = 4, std::size_t se_ratio = 4)
        : name(std::move(name_)), channels(channels_), kernel_size(kernel_size_), use_gconv(use_gconv_) {
        if (kernel_size % 2 == 0)
            throw ConfigError("block kernel size must be odd, got " + std::to_string(kernel_size));
        if (has_reparam_mixer()) {
            drb = DilatedReparamBlock<S>(seed, name + ".mixer.drb", channels, kernel_size,
                                         default_reparam_branches(kernel_size));
        } else {
            dw = ConvLayer<S>(seed, name + ".mixer.dw", channels, channels, kernel_size,
                              Conv2dSpec{1, (kernel_size - 1) / 2, 1, channels}, false);
        }
        norm1 = BatchNormLayer<S>(channels);
        norm2 = BatchNormLayer<S>(channels);
        se = SqueezeExcite<S>(seed, name + ".se", channels, se_ratio);
        const std::size_t hidden = channels * expansion;
        if (use_gconv) {
            ffn_gconv = GatedConvLayer<S>(seed, name + ".ffn", channels, hidden, 1, Conv2dSpec{});
            ffn_proj = ConvLayer<S>(seed, name + ".ffn.proj", hidden, channels, 1, Conv2dSpec{}, true);
        } else {
            ffn_fc1 = ConvLayer<S>(seed, name + ".ffn.fc1", channels, hidden, 1, Conv2dSpec{}, true);
            ffn_fc2 = ConvLayer<S>(seed, name + ".ffn.fc2", hidden, channels, 1, Conv2dSpec{}, true);
        }
    }

    bool has_reparam_mixer() const { return kernel_size >= 7; }

    Tensor<S> forward(const Tensor<S>& x, bool training) {
        Tensor<S> mixed = has_reparam_mixer() ? drb.forward(x, training) : dw.forward(x);
        Tensor<S> y = add(x, se.forward(norm1.forward(mixed, training)));
        Tensor<S> h = norm2.forward(y, training);
        Tensor<S> f = use_gconv ? ffn_proj.forward(ffn_gconv.forward(h))
                                : ffn_fc2.forward(gelu(ffn_fc1.forward(h)));
        return add(y, f);
    }

    void collect(ParamList<S>& sink) const {
        if (has_reparam_mixer())
            drb.collect(sink);
        else
            dw.collect(name + ".mixer.dw", sink);
        norm1.collect(name + ".norm1", sink);
        norm2.collect(name + ".norm2", sink);
        se.collect(sink);
        if (use_gconv) {
            ffn_gconv.collect(sink);
            ffn_proj.collect(name + ".ffn.proj", sink);
        } else {
            ffn_fc1.collect(name + ".ffn.fc1", sink);
            ffn_fc2.collect(name + ".ffn.fc2", sink);
        }
    }
};

}  // namespace gup
