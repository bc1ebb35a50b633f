// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance harness. Each numbered criterion prints exactly one
// line with a pass, fail, or info status plus the measured evidence, and the
// process exits nonzero when any checked criterion fails. Criterion 1 is
// informational only: full-scale benchmark accuracy cannot be reproduced in
// a CPU-only build, so the scaled substitutes are criteria 8 and 9.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gup/blocks.hpp"
#include "gup/config.hpp"
#include "gup/data.hpp"
#include "gup/eval.hpp"
#include "gup/model.hpp"
#include "gup/train.hpp"
#include "gup/verify.hpp"

#include "../oracle_helpers.hpp"

namespace {

const std::string kFixtures = GUP_FIXTURE_DIR;

std::size_t g_failed = 0;

void report(std::size_t id, const char* status, const std::string& detail) {
    std::printf("criterion %-2zu %-4s %s\n", id, status, detail.c_str());
    std::fflush(stdout);
}

void record(std::size_t id, bool pass, const std::string& detail) {
    if (!pass) ++g_failed;
    report(id, pass ? "pass" : "fail", detail);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::map<std::string, double> parse_golden(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw gup::IoError("cannot open golden file " + path);
    std::map<std::string, double> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw gup::ParseError("malformed golden line: " + line);
        std::string key = line.substr(0, eq);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        out[key] = std::stod(line.substr(eq + 1));
    }
    return out;
}

template <class S>
gup::Tensor<S> random_images(const gup::ModelConfig& cfg, std::uint64_t salt) {
    gup::SplitMix64 rng(salt, "acceptance.images");
    gup::Tensor<S> x({1, 3, cfg.input_h, cfg.input_w});
    for (auto& v : x.data()) v = static_cast<S>(rng.next_uniform(0.0, 1.0));
    return x;
}

// --------------------------------------------------------------------------
// criterion 2: gradients of every differentiable operator and the composite
// block agree with 64-bit central differences.
// --------------------------------------------------------------------------

void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto opt = gup::default_verify_options<double>();
    const auto results = gup::run_gradient_checks<double>(opt);
    std::size_t failed = 0;
    std::string first_fail;
    for (const auto& r : results)
        if (!r.pass && failed++ == 0) first_fail = r.name + ": " + r.detail;
    std::ostringstream os;
    os << results.size() << " operator suites x " << opt.gradient_cases
       << " random cases, 64-bit central differences h=" << opt.fd_step << ", rel tol " << opt.fd_tolerance << ", "
       << seconds_since(t0) << "s";
    if (failed > 0) os << "; first failure " << first_fail;
    record(2, failed == 0, os.str());
}

// --------------------------------------------------------------------------
// criterion 3: merged deploy form reproduces the training-form eval function
// for standalone mixers at kernel sizes 7, 9, 13 and for the whole model.
// --------------------------------------------------------------------------

template <class S>
bool reparam_precision(double& drb_worst, double& model_worst, double& tol) {
    const auto opt = gup::default_verify_options<S>();
    tol = opt.reparam_tolerance;
    const auto drb = gup::check_reparam_equivalence<S>(opt);
    {
        std::istringstream in(drb.detail.substr(drb.detail.find("diff ") + 5));
        in >> drb_worst;
    }

    gup::ModelConfig cfg = gup::ModelConfig::toy_preset();
    cfg.seed = opt.seed;
    gup::GatedUniPoseModel<S> model(cfg);
    model.set_train(false);
    gup::NoGradGuard guard;
    std::vector<gup::Tensor<S>> inputs;
    std::vector<gup::Tensor<S>> before;
    for (std::uint64_t i = 0; i < 10; ++i) {
        inputs.push_back(random_images<S>(cfg, 90 + i));
        before.push_back(model.forward(inputs.back()));
    }
    model.switch_to_deploy();
    model_worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        model_worst = std::max(model_worst, oracle::max_abs_diff(before[i], model.forward(inputs[i])));
    return drb.pass && model_worst <= tol;
}

void criterion_reparam() {
    double drb32 = 0, net32 = 0, tol32 = 0, drb64 = 0, net64 = 0, tol64 = 0;
    const bool ok32 = reparam_precision<float>(drb32, net32, tol32);
    const bool ok64 = reparam_precision<double>(drb64, net64, tol64);
    std::ostringstream os;
    os << "mixers k=7/9/13 x10 inputs and full model x10 inputs; f32 max diff " << std::max(drb32, net32)
       << " (tol " << tol32 << "), f64 max diff " << std::max(drb64, net64) << " (tol " << tol64 << ")";
    record(3, ok32 && ok64, os.str());
}

// --------------------------------------------------------------------------
// criterion 4: gate saturation collapses the gated conv to pass-through or
// zero, and gating never amplifies the value path.
// --------------------------------------------------------------------------

void criterion_gconv() {
    bool pass = true;
    std::ostringstream os;
    const char* tags[] = {"f32", "f64"};
    int t = 0;
    auto fold = [&](auto results) {
        os << (t ? "; " : "") << tags[t];
        for (const auto& r : results) {
            pass = pass && r.pass;
            os << " " << r.name.substr(r.name.find('.') + 1) << (r.pass ? " ok" : " FAILED");
        }
        ++t;
    };
    fold(gup::check_gconv<float>(gup::default_verify_options<float>()));
    fold(gup::check_gconv<double>(gup::default_verify_options<double>()));
    record(4, pass, "saturated gate bias +/-1000 within 1e-6 and |gated| <= |value|: " + os.str());
}

// --------------------------------------------------------------------------
// criterion 5: a zero-initialized dynamic upsampler equals fixed bilinear
// interpolation at scales 2 and 4.
// --------------------------------------------------------------------------

void criterion_dysample() {
    const auto r32 = gup::check_dysample_degeneracy<float>(gup::default_verify_options<float>());
    const auto r64 = gup::check_dysample_degeneracy<double>(gup::default_verify_options<double>());
    record(5, r32.pass && r64.pass, "scales 2 and 4, f32: " + r32.detail + "; f64: " + r64.detail);
}

// --------------------------------------------------------------------------
// criterion 6: heatmap encode/decode round-trips interior keypoints within
// half a pixel.
// --------------------------------------------------------------------------

void criterion_codec() {
    const auto r = gup::check_codec_roundtrip(gup::default_verify_options<double>());
    record(6, r.pass, r.detail);
}

// --------------------------------------------------------------------------
// criterion 7: metric implementations match closed-form values, the committed
// fixture scenes reproduce their golden files exactly, and AP never increases
// with a stricter threshold.
// --------------------------------------------------------------------------

bool fixtures_match_goldens(std::string& detail) {
    bool ok = true;

    auto ann = gup::load_annotations(kFixtures + "/ap_scene.json", true);
    auto preds = gup::load_predictions(kFixtures + "/ap_preds.json");
    std::vector<gup::GtInstance> gts;
    for (const auto& r : ann.records) gts.push_back(r.gt_instance());
    auto ap = gup::average_precision(preds, gts, gup::coco_k_table());
    const auto ap_golden = parse_golden(kFixtures + "/ap_golden.txt");
    for (std::size_t t = 0; t < ap.thresholds.size(); ++t) {
        const double want = ap.thresholds[t] < 0.625 ? ap_golden.at("ap_low") : ap_golden.at("ap_high");
        ok = ok && ap.per_threshold[t] == want;
    }
    const double want_overall = (3.0 * ap_golden.at("ap_low") + 7.0 * ap_golden.at("ap_high")) / 10.0;
    ok = ok && std::abs(ap.overall - want_overall) <= 1e-15 * want_overall;
    ok = ok && ap.matched == static_cast<std::size_t>(ap_golden.at("matched"));
    ok = ok && ap.unmatched == static_cast<std::size_t>(ap_golden.at("unmatched"));

    auto ph_ann = gup::load_annotations(kFixtures + "/pckh_scene.json", true);
    auto ph_preds = gup::load_predictions(kFixtures + "/pckh_preds.json");
    std::vector<gup::GtInstance> ph_gts;
    for (const auto& r : ph_ann.records) ph_gts.push_back(r.gt_instance());
    auto ph = gup::pckh(ph_preds, ph_gts, 0.5);
    const auto ph_golden = parse_golden(kFixtures + "/pckh_golden.txt");
    const std::vector<std::string> keys = {"head", "shoulder", "elbow", "wrist", "hip", "knee", "ankle"};
    for (std::size_t g = 0; g < keys.size(); ++g) ok = ok && ph.per_joint[g] == ph_golden.at(keys[g]);
    ok = ok && ph.overall == ph_golden.at("mean");
    ok = ok && ph.matched == static_cast<std::size_t>(ph_golden.at("matched"));
    ok = ok && ph.unmatched == static_cast<std::size_t>(ph_golden.at("unmatched"));

    std::ostringstream os;
    os << "fixture AP " << ap.overall << " and PCKh mean " << ph.overall << " reproduce the goldens exactly";
    detail = os.str();
    return ok;
}

void criterion_metrics() {
    const auto results = gup::check_metric_oracles(gup::default_verify_options<double>());
    bool pass = true;
    std::string first_fail;
    for (const auto& r : results)
        if (!r.pass && pass) {
            pass = false;
            first_fail = r.name + ": " + r.detail;
        }
    std::string fixture_detail;
    const bool fixtures_ok = fixtures_match_goldens(fixture_detail);
    std::ostringstream os;
    os << "closed-form similarity values, threshold monotonicity, hand-counted scenes; " << fixture_detail;
    if (!pass) os << "; first failure " << first_fail;
    if (!fixtures_ok) os << "; golden comparison FAILED";
    record(7, pass && fixtures_ok, os.str());
}

// --------------------------------------------------------------------------
// criterion 8: the default synthetic training run localizes the held-out
// keypoints and shrinks the loss by at least 90 percent within 300 steps.
// --------------------------------------------------------------------------

void criterion_training() {
    const auto t0 = std::chrono::steady_clock::now();
    gup::Config cfg;
    cfg.finalize();
    gup::GatedUniPoseModel<float> model(cfg.model);
    std::ostringstream log;
    const auto outcome = gup::train_toy(model, cfg, log, "/tmp/gup_acceptance_toy.gupz");
    const double wall = seconds_since(t0);
    const double reduction =
        outcome.initial_loss > 0.0 ? (outcome.initial_loss - outcome.final_loss) / outcome.initial_loss : 0.0;
    const bool pass = outcome.pck2 >= 0.95 && reduction >= 0.90 && outcome.steps_run <= 300 && wall < 600.0;
    std::ostringstream os;
    os << "held-out pck@2px " << outcome.pck2 << " (need >= 0.95), loss reduction " << reduction
       << " (need >= 0.90) after " << outcome.steps_run << " steps in " << wall << "s (limit 600s)";
    record(8, pass, os.str());
}

// --------------------------------------------------------------------------
// criterion 9: full-scale tensor shapes. The embedding stem halves 256x192
// input to 128x96 at 768 channels and the complete network emits 17 heatmaps
// at quarter resolution. The parameter count is printed beside the published
// full-scale reference for comparison.
// --------------------------------------------------------------------------

void criterion_shapes() {
    const auto t0 = std::chrono::steady_clock::now();
    gup::NoGradGuard guard;
    bool stem_ok = false;
    {
        auto stem = gup::GlaceEmbed<float>::stem(42, "stem.glace", 3, 768);
        gup::SplitMix64 rng(7, "acceptance.stem");
        gup::Tensor<float> x({1, 3, 256, 192});
        for (auto& v : x.data()) v = static_cast<float>(rng.next_uniform(0.0, 1.0));
        const auto y = stem.forward(x, false);
        stem_ok = y.shape() == gup::Shape{1, 768, 128, 96};
    }

    gup::ModelConfig cfg = gup::ModelConfig::paper_preset();
    gup::GatedUniPoseModel<float> model(cfg);
    model.set_train(false);
    const auto heatmaps = model.forward(random_images<float>(cfg, 11));
    const bool out_ok = heatmaps.shape() == gup::Shape{1, 17, 64, 48};
    const std::size_t params = model.parameter_count();
    const bool count_ok = params == oracle::closed_form_param_count(cfg);

    std::ostringstream os;
    os << "stem [1,3,256,192] -> [1,768,128,96] " << (stem_ok ? "ok" : "FAILED") << ", full model -> [1,17,64,48] "
       << (out_ok ? "ok" : "FAILED") << ", " << params
       << " parameters (closed-form oracle agrees; full-scale reference 52.4M), " << seconds_since(t0) << "s";
    record(9, stem_ok && out_ok && count_ok, os.str());
}

// --------------------------------------------------------------------------
// criterion 10: each architecture switch replaces exactly its own subtree,
// the eight switch combinations all build and run, and every combination has
// a distinct parameter manifest.
// --------------------------------------------------------------------------

template <class S>
std::map<std::string, gup::Tensor<S>> param_map(const gup::ModelConfig& cfg) {
    gup::GatedUniPoseModel<S> model(cfg);
    std::map<std::string, gup::Tensor<S>> out;
    model.visit_params([&](const std::string& n, const gup::Tensor<S>& t, bool) { out.emplace(n, t); });
    return out;
}

template <class Pred>
bool subtree_swap_ok(const gup::ModelConfig& base, const gup::ModelConfig& variant, Pred touched) {
    const auto a = param_map<float>(base);
    const auto b = param_map<float>(variant);
    bool saw_difference = false;
    for (const auto& [name, tensor] : a) {
        auto it = b.find(name);
        if (it == b.end()) {
            saw_difference = true;
            if (!touched(name)) return false;
            continue;
        }
        if (tensor.shape() != it->second.shape()) return false;
        for (std::size_t i = 0; i < tensor.numel(); ++i)
            if (tensor.data()[i] != it->second.data()[i]) return false;
    }
    for (const auto& [name, tensor] : b)
        if (a.find(name) == a.end()) {
            saw_difference = true;
            if (!touched(name)) return false;
        }
    return saw_difference;
}

void criterion_ablations() {
    const gup::ModelConfig base = gup::ModelConfig::toy_preset();

    auto gconv_cfg = base;
    gconv_cfg.use_gconv = false;
    const bool gconv_ok = subtree_swap_ok(base, gconv_cfg,
                                          [](const std::string& n) { return n.find(".ffn.") != std::string::npos; });

    auto glace_cfg = base;
    glace_cfg.use_glace = false;
    const bool glace_ok = subtree_swap_ok(base, glace_cfg, [](const std::string& n) {
        return n.find(".glace.") != std::string::npos || n.find(".plain.") != std::string::npos;
    });

    auto dysample_cfg = base;
    dysample_cfg.use_dysample = false;
    const bool dysample_ok = subtree_swap_ok(
        base, dysample_cfg, [](const std::string& n) { return n.rfind("head.up.", 0) == 0; });

    gup::NoGradGuard guard;
    std::set<std::set<std::string>> manifests;
    bool forwards_ok = true;
    for (int mask = 0; mask < 8; ++mask) {
        auto cfg = base;
        cfg.use_gconv = (mask & 1) != 0;
        cfg.use_glace = (mask & 2) != 0;
        cfg.use_dysample = (mask & 4) != 0;
        gup::GatedUniPoseModel<float> model(cfg);
        model.set_train(false);
        const auto y = model.forward(random_images<float>(cfg, 40 + static_cast<std::uint64_t>(mask)));
        forwards_ok = forwards_ok && y.shape() == gup::Shape{1, cfg.joints, cfg.heatmap_h(), cfg.heatmap_w()};
        for (const auto v : y.data()) forwards_ok = forwards_ok && std::isfinite(v);
        std::set<std::string> names;
        model.visit_params([&](const std::string& n, const gup::Tensor<float>&, bool) { names.insert(n); });
        manifests.insert(std::move(names));
    }

    std::ostringstream os;
    os << "subtree swaps gated-ffn " << (gconv_ok ? "ok" : "FAILED") << ", embed " << (glace_ok ? "ok" : "FAILED")
       << ", upsampler " << (dysample_ok ? "ok" : "FAILED") << "; 8/8 switch combinations forward with "
       << manifests.size() << " distinct manifests";
    record(10, gconv_ok && glace_ok && dysample_ok && forwards_ok && manifests.size() == 8, os.str());
}

}  // namespace

int main() {
    try {
        report(1, "info",
               "full-scale benchmark accuracy is not reproducible in a CPU-only build; "
               "criteria 8 and 9 cover the scaled training run and full-scale shapes");
        criterion_gradients();
        criterion_reparam();
        criterion_gconv();
        criterion_dysample();
        criterion_codec();
        criterion_metrics();
        criterion_training();
        criterion_shapes();
        criterion_ablations();
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 1;
    }
    std::printf("criteria checked=9 failed=%zu (plus 1 informational)\n", g_failed);
    return g_failed == 0 ? 0 : 1;
}
