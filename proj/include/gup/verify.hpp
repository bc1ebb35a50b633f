// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "gup/blocks.hpp"
#include "gup/codec.hpp"
#include "gup/common.hpp"
#include "gup/conv.hpp"
#include "gup/eval.hpp"
#include "gup/losses.hpp"
#include "gup/model.hpp"
#include "gup/ops.hpp"
#include "gup/rng.hpp"
#include "gup/tensor.hpp"

namespace gup {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Tolerances for the self-check suite. Finite differencing always runs in
/// 64-bit where the central difference is meaningful; equivalence checks
/// loosen to 1e-4 under 32-bit arithmetic.
struct VerifyOptions {
    std::uint64_t seed = 42;
    std::size_t gradient_cases = 20;
    std::size_t reparam_inputs = 10;
    double fd_step = 1e-5;
    double fd_tolerance = 1e-3;
    double reparam_tolerance = 1e-8;
};

template <class S>
VerifyOptions default_verify_options() {
    VerifyOptions o;
    if constexpr (sizeof(S) == 4) o.reparam_tolerance = 1e-4;
    return o;
}

namespace verify_detail {

template <class S>
Tensor<S> random_tensor(const Shape& shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<S> t(shape);
    for (auto& v : t.data()) v = static_cast<S>(rng.next_uniform(lo, hi));
    return t;
}

/// Fixed random linear functional, so every loss is a smooth scalar of the
/// output with nonzero gradient almost everywhere.
template <class S>
Tensor<S> weighted_sum(const Tensor<S>& x, std::uint64_t salt) {
    SplitMix64 rng(salt, "verify.weights");
    Tensor<S> w(x.shape());
    for (auto& v : w.data()) v = static_cast<S>(rng.next_uniform(-1.0, 1.0));
    return sum_all(hadamard(x, w));
}

/// Central-difference gradient comparison for a scalar functional of the
/// given leaf tensors. Returns the worst relative error seen.
template <class S>
double fd_max_rel(const std::function<Tensor<S>()>& loss_fn, std::vector<Tensor<S>> leaves, double h) {
    for (auto& t : leaves) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tensor<S> loss = loss_fn();
    loss.backward();

    double worst = 0.0;
    const double floor = 1e-4;
    for (auto& t : leaves) {
        const std::vector<S>& grad = t.impl()->grad;
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const S keep = t.data()[i];
            double fp, fm;
            {
                NoGradGuard guard;
                t.data()[i] = static_cast<S>(static_cast<double>(keep) + h);
                fp = static_cast<double>(loss_fn().item());
                t.data()[i] = static_cast<S>(static_cast<double>(keep) - h);
                fm = static_cast<double>(loss_fn().item());
                t.data()[i] = keep;
            }
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
            const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), floor});
            worst = std::max(worst, rel);
        }
    }
    for (auto& t : leaves) t.set_requires_grad(false);
    return worst;
}

inline CheckResult make_result(const std::string& name, bool pass, const std::string& detail) {
    return {name, pass, detail};
}

template <class S>
CheckResult gradient_check(const std::string& name, const VerifyOptions& opt,
                           const std::function<double(std::uint64_t)>& case_runner) {
    double worst = 0.0;
    for (std::size_t c = 0; c < opt.gradient_cases; ++c)
        worst = std::max(worst, case_runner(opt.seed + 1000 * c));
    std::ostringstream os;
    os << "max rel err " << worst << " over " << opt.gradient_cases << " cases (tol " << opt.fd_tolerance << ")";
    return make_result(name, worst <= opt.fd_tolerance, os.str());
}

}  // namespace verify_detail

template <class S>
std::vector<CheckResult> run_gradient_checks(const VerifyOptions& opt) {
    namespace vd = verify_detail;
    std::vector<CheckResult> out;

    out.push_back(vd::gradient_check<S>("gradient.conv2d", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "conv");
        const bool depthwise = (seed / 1000) % 3 == 0;
        const std::size_t stride = 1 + (seed / 1000) % 2;
        Conv2dSpec spec{stride, 1, 1, depthwise ? 3u : 1u};
        auto x = vd::random_tensor<S>({1, 3, 5, 5}, rng);
        auto w = depthwise ? vd::random_tensor<S>({3, 1, 3, 3}, rng) : vd::random_tensor<S>({4, 3, 3, 3}, rng);
        auto b = vd::random_tensor<S>({w.dim(0)}, rng);
        return vd::fd_max_rel<S>(
            [&]() { return vd::weighted_sum(conv2d(x, w, b, spec), seed); }, {x, w, b}, opt.fd_step);
    }));

    out.push_back(vd::gradient_check<S>("gradient.transposed_conv2d", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "deconv");
        Conv2dSpec spec{2, 1, 1, 1};
        auto x = vd::random_tensor<S>({1, 2, 4, 4}, rng);
        auto w = vd::random_tensor<S>({2, 3, 4, 4}, rng);
        auto b = vd::random_tensor<S>({3}, rng);
        return vd::fd_max_rel<S>(
            [&]() { return vd::weighted_sum(transposed_conv2d(x, w, b, spec), seed); }, {x, w, b}, opt.fd_step);
    }));

    out.push_back(vd::gradient_check<S>("gradient.elementwise", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "elem");
        auto x = vd::random_tensor<S>({2, 3, 4, 4}, rng);
        auto y = vd::random_tensor<S>({2, 3, 4, 4}, rng);
        return vd::fd_max_rel<S>(
            [&]() { return vd::weighted_sum(gelu(add(hadamard(sigmoid(x), y), x)), seed); }, {x, y}, opt.fd_step);
    }));

    out.push_back(vd::gradient_check<S>("gradient.squeeze_excite_path", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "se");
        auto x = vd::random_tensor<S>({2, 4, 3, 3}, rng);
        auto w1 = vd::random_tensor<S>({2, 4}, rng);
        auto b1 = vd::random_tensor<S>({2}, rng);
        auto w2 = vd::random_tensor<S>({4, 2}, rng);
        auto b2 = vd::random_tensor<S>({4}, rng);
        return vd::fd_max_rel<S>(
            [&]() {
                auto s = sigmoid(linear(gelu(linear(global_avg_pool(x), w1, b1)), w2, b2));
                return vd::weighted_sum(scale_channels(x, s), seed);
            },
            {x, w1, b1, w2, b2}, opt.fd_step);
    }));

    out.push_back(vd::gradient_check<S>("gradient.batch_norm", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "bn");
        const bool training = (seed / 1000) % 2 == 0;
        auto x = vd::random_tensor<S>({2, 3, 4, 4}, rng);
        auto gamma = vd::random_tensor<S>({3}, rng, 0.5, 1.5);
        auto beta = vd::random_tensor<S>({3}, rng);
        return vd::fd_max_rel<S>(
            [&]() {
                Tensor<S> rm({3}), rv = Tensor<S>::full({3}, S(1));
                return vd::weighted_sum(batch_norm(x, gamma, beta, rm, rv, training), seed);
            },
            {x, gamma, beta}, opt.fd_step);
    }));

    out.push_back(vd::gradient_check<S>("gradient.grid_sample", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "gs");
        auto x = vd::random_tensor<S>({1, 2, 5, 5}, rng);
        // Interior, off-lattice sample points keep the bilinear surface
        // differentiable at the probe step.
        Tensor<S> coords({1, 2, 3, 3});
        for (auto& v : coords.data()) v = static_cast<S>(rng.next_uniform(0.3, 3.7) + 0.013);
        return vd::fd_max_rel<S>(
            [&]() { return vd::weighted_sum(grid_sample_bilinear(x, coords), seed); }, {x, coords}, opt.fd_step);
    }));

    out.push_back(vd::gradient_check<S>("gradient.bilinear_upsample", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "up");
        auto x = vd::random_tensor<S>({1, 3, 4, 3}, rng);
        return vd::fd_max_rel<S>(
            [&]() { return vd::weighted_sum(bilinear_upsample(x, 2), seed); }, {x}, opt.fd_step);
    }));

    out.push_back(vd::gradient_check<S>("gradient.dysample", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "dys");
        DySampleUpsampler<S> up(seed, "vdys", 2, 2);
        // Small nonzero offsets keep every sampling point away from the
        // clamp range and off the integer lattice where bilinear kinks.
        for (auto& v : up.offset.weight.data()) v = static_cast<S>(rng.next_uniform(-0.05, 0.05));
        for (auto& v : up.offset.bias.data()) v = static_cast<S>(rng.next_uniform(-0.05, 0.05));
        auto x = vd::random_tensor<S>({1, 2, 5, 4}, rng);
        return vd::fd_max_rel<S>([&]() { return vd::weighted_sum(up.forward(x), seed); },
                                 {x, up.offset.weight, up.offset.bias}, opt.fd_step);
    }));

    out.push_back(vd::gradient_check<S>("gradient.pool_concat_decoder", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "dec");
        auto a = vd::random_tensor<S>({1, 2, 8, 8}, rng);
        auto b = vd::random_tensor<S>({1, 3, 8, 8}, rng);
        auto w = vd::random_tensor<S>({5, 2, 4, 4}, rng);
        return vd::fd_max_rel<S>(
            [&]() {
                auto fused = avg_pool2d(concat_channels(a, b), 2);
                return vd::weighted_sum(transposed_conv2d(fused, w, {}, Conv2dSpec{2, 1, 1, 1}), seed);
            },
            {a, b, w}, opt.fd_step);
    }));

    out.push_back(vd::gradient_check<S>("gradient.mse_loss", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "mse");
        auto p = vd::random_tensor<S>({2, 3, 4, 4}, rng);
        auto t = vd::random_tensor<S>({2, 3, 4, 4}, rng);
        const std::vector<int> mask = {1, 0, 1};
        return vd::fd_max_rel<S>([&]() { return mse_heatmap_loss(p, t, mask); }, {p, t}, opt.fd_step);
    }));

    out.push_back(vd::gradient_check<S>("gradient.block", opt, [&](std::uint64_t seed) {
        SplitMix64 rng(seed, "block");
        GatedUniPoseBlock<S> block(seed, "vblock", 4, 7, true);
        auto x = vd::random_tensor<S>({1, 4, 7, 7}, rng);
        std::vector<Tensor<S>> leaves{x};
        ParamList<S> params;
        block.collect(params);
        for (const auto& p : params.entries())
            if (p.trainable) leaves.push_back(p.tensor);
        return vd::fd_max_rel<S>([&]() { return vd::weighted_sum(block.forward(x, false), seed); }, leaves,
                                 opt.fd_step);
    }));

    return out;
}

template <class S>
CheckResult check_reparam_equivalence(const VerifyOptions& opt) {
    double worst = 0.0;
    for (std::size_t kernel : {7u, 9u, 13u}) {
        DilatedReparamBlock<S> trained(opt.seed + kernel, "vdrb", 3, kernel, default_reparam_branches(kernel));
        DilatedReparamBlock<S> deployed(opt.seed + kernel, "vdrb", 3, kernel, default_reparam_branches(kernel));
        {
            NoGradGuard guard;
            deployed.merge();
        }
        for (std::size_t i = 0; i < opt.reparam_inputs; ++i) {
            SplitMix64 rng(opt.seed + 31 * i + kernel, "reparam.x");
            auto x = verify_detail::random_tensor<S>({1, 3, 17, 17}, rng);
            NoGradGuard guard;
            auto a = trained.forward(x, false);
            auto b = deployed.forward(x, false);
            for (std::size_t e = 0; e < a.numel(); ++e)
                worst = std::max(worst, std::abs(static_cast<double>(a.data()[e]) - static_cast<double>(b.data()[e])));
        }
    }

    ModelConfig cfg = ModelConfig::toy_preset();
    cfg.seed = opt.seed;
    GatedUniPoseModel<S> trained(cfg);
    GatedUniPoseModel<S> deployed(cfg);
    deployed.switch_to_deploy();
    for (std::size_t i = 0; i < 2; ++i) {
        SplitMix64 rng(opt.seed + i, "reparam.model.x");
        auto x = verify_detail::random_tensor<S>({1, 3, cfg.input_h, cfg.input_w}, rng, 0.0, 1.0);
        NoGradGuard guard;
        auto a = trained.forward(x);
        auto b = deployed.forward(x);
        for (std::size_t e = 0; e < a.numel(); ++e)
            worst = std::max(worst, std::abs(static_cast<double>(a.data()[e]) - static_cast<double>(b.data()[e])));
    }

    std::ostringstream os;
    os << "max abs diff " << worst << " (tol " << opt.reparam_tolerance << ")";
    return verify_detail::make_result("reparam.equivalence", worst <= opt.reparam_tolerance, os.str());
}

template <class S>
std::vector<CheckResult> check_gconv(const VerifyOptions& opt) {
    namespace vd = verify_detail;
    std::vector<CheckResult> out;
    NoGradGuard guard;

    double pass_diff = 0.0, zero_diff = 0.0, bound_excess = 0.0;
    for (std::size_t c = 0; c < 8; ++c) {
        SplitMix64 rng(opt.seed + c, "gconv");
        GatedConvLayer<S> layer(opt.seed + c, "vg", 3, 5, 3, Conv2dSpec{1, 1, 1, 1});
        auto x = vd::random_tensor<S>({1, 3, 6, 6}, rng);
        auto value_only = layer.value.forward(x);

        // Saturated gate bias drives the sigmoid to 1 (pass-through) or 0.
        for (auto& b : layer.gate.bias.data()) b = S(1000);
        auto passed = layer.forward(x);
        for (std::size_t i = 0; i < passed.numel(); ++i)
            pass_diff = std::max(pass_diff, std::abs(static_cast<double>(passed.data()[i]) -
                                                     static_cast<double>(value_only.data()[i])));
        for (auto& b : layer.gate.bias.data()) b = S(-1000);
        auto zeroed = layer.forward(x);
        for (std::size_t i = 0; i < zeroed.numel(); ++i)
            zero_diff = std::max(zero_diff, std::abs(static_cast<double>(zeroed.data()[i])));

        for (auto& b : layer.gate.bias.data()) b = static_cast<S>(rng.next_uniform(-2.0, 2.0));
        auto gated = layer.forward(x);
        auto value2 = layer.value.forward(x);
        for (std::size_t i = 0; i < gated.numel(); ++i)
            bound_excess = std::max(bound_excess, std::abs(static_cast<double>(gated.data()[i])) -
                                                      std::abs(static_cast<double>(value2.data()[i])));
    }

    std::ostringstream sat;
    sat << "pass-through diff " << pass_diff << ", zero diff " << zero_diff << " (tol 1e-6)";
    out.push_back(vd::make_result("gconv.saturation", pass_diff <= 1e-6 && zero_diff <= 1e-6, sat.str()));
    std::ostringstream bnd;
    bnd << "max |gated| - |value| = " << bound_excess << " (must be <= 0 within 1e-9)";
    out.push_back(vd::make_result("gconv.bound", bound_excess <= 1e-9, bnd.str()));
    return out;
}

template <class S>
CheckResult check_dysample_degeneracy(const VerifyOptions& opt) {
    namespace vd = verify_detail;
    NoGradGuard guard;
    double worst = 0.0;
    for (std::size_t scale : {2u, 4u}) {
        for (std::size_t c = 0; c < 4; ++c) {
            SplitMix64 rng(opt.seed + 17 * scale + c, "dysample");
            DySampleUpsampler<S> up(opt.seed + c, "vup", 3, scale);
            auto x = vd::random_tensor<S>({1, 3, 5, 4}, rng);
            auto learned = up.forward(x);
            auto fixed = bilinear_upsample(x, scale);
            for (std::size_t i = 0; i < learned.numel(); ++i)
                worst = std::max(worst, std::abs(static_cast<double>(learned.data()[i]) -
                                                 static_cast<double>(fixed.data()[i])));
        }
    }
    std::ostringstream os;
    os << "max abs diff vs fixed bilinear " << worst << " (tol 1e-6)";
    return vd::make_result("dysample.degeneracy", worst <= 1e-6, os.str());
}

inline CheckResult check_codec_roundtrip(const VerifyOptions& opt) {
    double worst = 0.0;
    std::size_t cases = 0;
    SplitMix64 rng(opt.seed, "verify.codec");
    for (int i = 0; i < 520; ++i) {
        const double cx = rng.next_uniform(3.0, 44.0);
        const double cy = rng.next_uniform(3.0, 60.0);
        KeypointSet k;
        k.joints.push_back({cell_to_px(cx, 4.0), cell_to_px(cy, 4.0), 2});
        auto hm = encode_gaussian<float>(k, 64, 48, 2.0, 4.0);
        auto dec = decode_keypoints(hm, 4.0);
        worst = std::max(worst,
                         std::max(std::abs(dec[0].x - k.joints[0].x), std::abs(dec[0].y - k.joints[0].y)));
        ++cases;
    }
    std::ostringstream os;
    os << "worst round-trip error " << worst << " px over " << cases << " positions (tol 0.5)";
    return verify_detail::make_result("codec.roundtrip", cases >= 500 && worst <= 0.5, os.str());
}

namespace verify_detail {

/// The committed three-instance matching scene, rebuilt as code constants.
/// One exact prediction, one perturbed to a mid-range similarity, one far
/// off. Hand enumeration gives per-threshold precision 67/101 while the
/// mid prediction still matches and 34/101 after it stops matching.
struct ApScene {
    std::vector<GtInstance> gts;
    std::vector<ScoredInstance> preds;
};

inline ApScene build_ap_scene() {
    const auto k = coco_k_table();
    ApScene scene;
    auto make_gt = [&](double x0) {
        GtInstance gt;
        gt.image_id = 1;
        gt.area = 2500.0;
        for (std::size_t i = 0; i < k.size(); ++i)
            gt.keypoints.joints.push_back({x0 + 6.0 * static_cast<double>(i), 100.0, 2});
        return gt;
    };
    scene.gts.push_back(make_gt(100.0));
    scene.gts.push_back(make_gt(600.0));
    scene.gts.push_back(make_gt(1100.0));

    ScoredInstance exact{1, 0.9, scene.gts[0].keypoints};
    // Displace every joint by scale * k_i * c so each term contributes
    // exp(-c^2/2) and the overall similarity is 0.62, strictly between the
    // 0.60 and 0.65 thresholds.
    const double c = std::sqrt(-2.0 * std::log(0.62));
    ScoredInstance mid{1, 0.8, scene.gts[1].keypoints};
    for (std::size_t i = 0; i < k.size(); ++i) mid.keypoints.joints[i].x += 50.0 * k[i] * c;
    ScoredInstance far{1, 0.7, {}};
    for (std::size_t i = 0; i < k.size(); ++i) far.keypoints.joints.push_back({2000.0, 2000.0, 2});

    scene.preds = {exact, mid, far};
    return scene;
}

}  // namespace verify_detail

inline std::vector<CheckResult> check_metric_oracles(const VerifyOptions& opt) {
    namespace vd = verify_detail;
    std::vector<CheckResult> out;

    // Closed forms.
    {
        KeypointSet gt;
        gt.joints.push_back({10.0, 20.0, 2});
        OksParams params{{0.1}, 5.0};
        const double identity = oks(gt, gt, params);
        KeypointSet pred = gt;
        pred.joints[0].x += 5.0 * 0.1;  // distance s*k*sqrt(2) split across axes
        pred.joints[0].y += 5.0 * 0.1;
        const double e1 = oks(pred, gt, params);
        const bool pass = std::abs(identity - 1.0) <= 1e-12 && std::abs(e1 - std::exp(-1.0)) <= 1e-6;
        std::ostringstream os;
        os << "identity " << identity << ", sqrt2 displacement " << e1 << " vs " << std::exp(-1.0);
        out.push_back(vd::make_result("metrics.oks_closed_form", pass, os.str()));
    }

    // Hand-enumerated matching scene.
    {
        auto scene = vd::build_ap_scene();
        auto report = average_precision(scene.preds, scene.gts, coco_k_table());
        const double lo = 67.0 / 101.0, hi = 34.0 / 101.0;
        bool pass = std::abs(report.overall - (3.0 * lo + 7.0 * hi) / 10.0) <= 1e-12;
        for (std::size_t t = 0; t < report.per_threshold.size(); ++t) {
            const double want = (report.thresholds[t] < 0.625) ? lo : hi;
            if (std::abs(report.per_threshold[t] - want) > 1e-12) pass = false;
        }
        pass = pass && report.matched == 2;
        std::ostringstream os;
        os << "overall " << report.overall << " (expected " << (3.0 * lo + 7.0 * hi) / 10.0 << "), matched "
           << report.matched;
        out.push_back(vd::make_result("metrics.ap_scene", pass, os.str()));
    }

    // Monotonicity across thresholds on random scenes.
    {
        bool pass = true;
        SplitMix64 rng(opt.seed, "verify.apmono");
        for (int scene_i = 0; scene_i < 5 && pass; ++scene_i) {
            std::vector<GtInstance> gts;
            std::vector<ScoredInstance> preds;
            const auto k = coco_k_table();
            for (int img = 0; img < 3; ++img) {
                for (int p = 0; p < 3; ++p) {
                    GtInstance gt;
                    gt.image_id = img;
                    gt.area = rng.next_uniform(900.0, 4000.0);
                    for (std::size_t j = 0; j < k.size(); ++j)
                        gt.keypoints.joints.push_back(
                            {rng.next_uniform(0.0, 200.0), rng.next_uniform(0.0, 200.0), 2});
                    gts.push_back(gt);
                    ScoredInstance pr{img, rng.next_uniform(0.1, 1.0), gt.keypoints};
                    const double wobble = rng.next_uniform(0.0, 12.0);
                    for (auto& jt : pr.keypoints.joints) {
                        jt.x += rng.next_uniform(-wobble, wobble);
                        jt.y += rng.next_uniform(-wobble, wobble);
                    }
                    preds.push_back(pr);
                }
            }
            auto report = average_precision(preds, gts, k);
            for (std::size_t t = 1; t < report.per_threshold.size(); ++t)
                if (report.per_threshold[t] > report.per_threshold[t - 1] + 1e-12) pass = false;
        }
        out.push_back(vd::make_result("metrics.ap_monotonic", pass,
                                      pass ? "AP non-increasing across thresholds on 5 random scenes"
                                           : "AP increased at a higher threshold"));
    }

    // Head-normalized correctness scene with hand-counted rates.
    {
        auto make_gt = [](int image_id, double head) {
            GtInstance gt;
            gt.image_id = image_id;
            gt.head_size = head;
            for (int j = 0; j < 16; ++j)
                gt.keypoints.joints.push_back({10.0 * j, 5.0 * j, 2});
            return gt;
        };
        std::vector<GtInstance> gts;
        gts.push_back(make_gt(1, 10.0));
        gts.push_back(make_gt(1, 10.0));
        gts[1].keypoints.joints[0].v = 0;
        gts.push_back(make_gt(2, 10.0));
        gts.push_back(make_gt(2, -1.0));

        ScoredInstance p1{1, 0.9, gts[0].keypoints};
        ScoredInstance p2{1, 0.8, gts[1].keypoints};
        p2.keypoints.joints[8].x += 5.0;   // boundary: exactly 0.5 * head
        p2.keypoints.joints[9].y += 5.0;
        p2.keypoints.joints[10].x += 6.0;  // beyond the limit
        p2.keypoints.joints[15].y += 6.0;
        auto report = pckh({p1, p2}, gts, 0.5);

        const std::vector<double> want = {4.0 / 6.0, 4.0 / 6.0, 4.0 / 6.0, 2.0 / 6.0,
                                          4.0 / 6.0, 4.0 / 6.0, 3.0 / 5.0};
        bool pass = report.per_joint.size() == want.size();
        for (std::size_t g = 0; pass && g < want.size(); ++g)
            if (std::abs(report.per_joint[g] - want[g]) > 1e-12) pass = false;
        pass = pass && std::abs(report.overall - 25.0 / 41.0) <= 1e-12 && report.matched == 3 &&
               report.unmatched == 1;
        std::ostringstream os;
        os << "mean " << report.overall << " (expected " << 25.0 / 41.0 << "), skipped " << report.unmatched;
        out.push_back(vd::make_result("metrics.pckh_scene", pass, os.str()));
    }

    return out;
}

template <class S>
CheckResult check_determinism(const VerifyOptions& opt) {
    ModelConfig cfg = ModelConfig::toy_preset();
    cfg.seed = opt.seed;
    GatedUniPoseModel<S> a(cfg);
    GatedUniPoseModel<S> b(cfg);
    SplitMix64 rng(opt.seed, "verify.det");
    auto x = verify_detail::random_tensor<S>({1, 3, cfg.input_h, cfg.input_w}, rng, 0.0, 1.0);
    NoGradGuard guard;
    auto ya = a.forward(x);
    auto yb = b.forward(x);
    bool identical = ya.shape() == yb.shape();
    for (std::size_t i = 0; identical && i < ya.numel(); ++i)
        if (ya.data()[i] != yb.data()[i]) identical = false;
    return verify_detail::make_result("determinism.forward", identical,
                                      identical ? "two builds from one seed agree bit-exactly"
                                                : "outputs differ between identically seeded builds");
}

/// The full self-check suite behind the verify command.
template <class S>
std::vector<CheckResult> run_verification(const VerifyOptions& opt) {
    std::vector<CheckResult> out;
    auto grads = run_gradient_checks<double>(opt);
    out.insert(out.end(), grads.begin(), grads.end());
    out.push_back(check_reparam_equivalence<S>(opt));
    auto gconv = check_gconv<S>(opt);
    out.insert(out.end(), gconv.begin(), gconv.end());
    out.push_back(check_dysample_degeneracy<S>(opt));
    out.push_back(check_codec_roundtrip(opt));
    auto metrics = check_metric_oracles(opt);
    out.insert(out.end(), metrics.begin(), metrics.end());
    out.push_back(check_determinism<S>(opt));
    return out;
}

}  // namespace gup
