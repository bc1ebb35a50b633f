// SPDX-License-Identifier: Apache-2.0
//
// Single-binary command-line surface: verification suite, toy training,
// metric evaluation, parameter accounting, and deploy-time conversion.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gup/checkpoint.hpp"
#include "gup/codec.hpp"
#include "gup/common.hpp"
#include "gup/config.hpp"
#include "gup/data.hpp"
#include "gup/eval.hpp"
#include "gup/manifest.hpp"
#include "gup/model.hpp"
#include "gup/train.hpp"
#include "gup/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPropertyFailure = 1;
constexpr int kExitUsage = 2;

struct CommonFlags {
    std::string config_path;
    std::string seed_str;
    std::string precision;
    int threads = -1;
    std::string out_dir;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "config file with key = value lines");
    cmd->add_option("--seed", f.seed_str, "seed override");
    cmd->add_option("--precision", f.precision, "numeric precision")->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--threads", f.threads, "worker threads (0 = all hardware threads)");
    cmd->add_option("--out-dir", f.out_dir, "directory for logs, reports, and manifests");
}

gup::Config make_config(const CommonFlags& f) {
    gup::Config c = f.config_path.empty() ? gup::Config{} : gup::load_config(f.config_path);
    if (!f.seed_str.empty()) c.run.seed = gup::detail::parse_u64("seed", f.seed_str);
    if (!f.precision.empty()) c.run.precision = f.precision;
    if (f.threads >= 0) c.run.threads = f.threads;
    if (!f.out_dir.empty()) c.run.out_dir = f.out_dir;
    c.finalize();
    std::filesystem::create_directories(c.run.out_dir);
    gup::set_thread_count(c.run.threads);
    return c;
}

/// Runs f with the scalar type selected by the config.
template <class F>
int with_precision(const gup::Config& cfg, F&& f) {
    if (cfg.run.precision == "f64") return f(double{});
    return f(float{});
}

void finish_manifest(gup::RunManifest& m, const gup::Config& cfg) {
    gup::write_manifest(m, cfg.run.out_dir + "/manifest-" + m.command + ".txt");
}

template <class S>
int run_verify(const gup::Config& cfg) {
    auto opt = gup::default_verify_options<S>();
    opt.seed = cfg.run.seed;
    auto results = gup::run_verification<S>(opt);

    auto manifest = gup::begin_manifest("verify", cfg);
    std::size_t failed = 0;
    for (const auto& r : results) {
        std::printf("%-32s %s  %s\n", r.name.c_str(), r.pass ? "pass" : "FAIL", r.detail.c_str());
        manifest.add_result(r.name, r.pass ? "pass" : "fail");
        if (!r.pass) ++failed;
    }
    std::printf("checks=%zu failed=%zu precision=%s\n", results.size(), failed, cfg.run.precision.c_str());
    manifest.add_result("failed", std::to_string(failed));
    finish_manifest(manifest, cfg);
    return failed == 0 ? kExitOk : kExitPropertyFailure;
}

template <class S>
int run_train_toy(const gup::Config& cfg, const std::string& resume_from) {
    auto manifest = gup::begin_manifest("train-toy", cfg);
    gup::GatedUniPoseModel<S> model(cfg.model);

    std::ostringstream log;
    const std::string ckpt = cfg.run.out_dir + "/toy.gupz";
    auto outcome = gup::train_toy<S>(model, cfg, log, ckpt, resume_from);

    std::cout << log.str();
    std::ofstream log_file(cfg.run.out_dir + "/train-log.txt");
    log_file << log.str();

    const double reduction =
        outcome.initial_loss > 0.0 ? 1.0 - outcome.final_loss / outcome.initial_loss : 0.0;
    std::printf("initial_loss=%.6g final_loss=%.6g reduction=%.4f pck2=%.4f\n", outcome.initial_loss,
                outcome.final_loss, reduction, outcome.pck2);

    manifest.add_result("initial_loss", std::to_string(outcome.initial_loss));
    manifest.add_result("final_loss", std::to_string(outcome.final_loss));
    manifest.add_result("pck2", std::to_string(outcome.pck2));
    manifest.add_result("checkpoint", outcome.checkpoint_path);
    finish_manifest(manifest, cfg);
    return kExitOk;
}

int run_eval(const gup::Config& cfg, const std::string& pred_path, const std::string& ann_path,
             const std::string& metric) {
    auto manifest = gup::begin_manifest("eval", cfg);
    auto annotations = gup::load_annotations(ann_path, true);
    auto predictions = gup::load_predictions(pred_path);

    std::vector<gup::GtInstance> gts;
    for (const auto& rec : annotations.records) gts.push_back(rec.gt_instance());

    if (!predictions.empty() && !gts.empty()) {
        const std::size_t pj = predictions.front().keypoints.joints.size();
        const std::size_t gj = gts.front().keypoints.joints.size();
        if (pj != gj)
            throw gup::UsageError("joint count mismatch: predictions have " + std::to_string(pj) +
                                  " joints, annotations have " + std::to_string(gj));
    }
    if (predictions.empty()) std::fprintf(stderr, "warning: prediction file is empty\n");

    std::ostringstream report_text;
    if (metric == "ap") {
        std::vector<double> k_table;
        const std::size_t joints = gts.empty() ? 17 : gts.front().keypoints.joints.size();
        if (joints == 17)
            k_table = gup::coco_k_table();
        else if (joints == 14)
            k_table = gup::crowdpose_k_table();
        else
            throw gup::UsageError("no default falloff table for " + std::to_string(joints) + " joints");

        auto report = gup::average_precision(predictions, gts, k_table);
        report_text << "metric=ap\n";
        char line[128];
        std::snprintf(line, sizeof(line), "AP %.3f\nAP50 %.3f\nAP75 %.3f\n", report.overall,
                      report.per_threshold[0], report.per_threshold[5]);
        report_text << line;
        for (std::size_t t = 0; t < report.thresholds.size(); ++t)
            report_text << "ap_at_" << report.thresholds[t] << "=" << report.per_threshold[t] << "\n";
        report_text << "matched=" << report.matched << " unmatched=" << report.unmatched << "\n";
        manifest.add_result("ap", std::to_string(report.overall));
    } else {
        auto report = gup::pckh(predictions, gts, 0.5);
        report_text << "metric=pckh\n";
        report_text << "Hea.  Sho.  Elb.  Wri.  Hip.  Kne.  Ank.  Mean\n";
        char cell[16];
        for (double v : report.per_joint) {
            std::snprintf(cell, sizeof(cell), "%-6.1f", 100.0 * v);
            report_text << cell;
        }
        std::snprintf(cell, sizeof(cell), "%-6.1f", 100.0 * report.overall);
        report_text << cell << "\n";
        report_text << "mean=" << report.overall << "\n";
        for (std::size_t g = 0; g < report.per_joint.size(); ++g)
            report_text << "pckh_" << report.joint_names[g] << "=" << report.per_joint[g] << "\n";
        report_text << "evaluated=" << report.matched << " skipped=" << report.unmatched << "\n";
        manifest.add_result("pckh_mean", std::to_string(report.overall));
    }

    std::cout << report_text.str();
    std::ofstream report_file(cfg.run.out_dir + "/eval-report.txt");
    report_file << report_text.str();
    finish_manifest(manifest, cfg);
    return kExitOk;
}

template <class S>
int run_params(const gup::Config& cfg) {
    auto manifest = gup::begin_manifest("params", cfg);
    gup::GatedUniPoseModel<S> model(cfg.model);

    // Group counts by the first two name segments (stem, stages.N, head,
    // decoder) so the breakdown follows the architecture.
    std::vector<std::pair<std::string, std::size_t>> groups;
    model.visit_params([&](const std::string& name, const gup::Tensor<S>& t, bool trainable) {
        if (!trainable) return;
        std::size_t cut = name.find('.');
        if (cut != std::string::npos && name.compare(0, 7, "stages.") == 0)
            cut = name.find('.', cut + 1);
        const std::string group = cut == std::string::npos ? name : name.substr(0, cut);
        if (groups.empty() || groups.back().first != group) groups.emplace_back(group, 0);
        groups.back().second += t.numel();
    });

    const std::size_t total = model.parameter_count();
    for (const auto& [group, count] : groups) std::printf("%-12s %10zu\n", group.c_str(), count);
    std::printf("total        %10zu  (%s)\n", total, gup::format_millions(total).c_str());
    if (cfg.model.stem_channels == 768 && cfg.model.joints == 17)
        std::printf("reference total for the full-scale configuration: 52.4M\n");
    manifest.add_result("total", std::to_string(total));
    finish_manifest(manifest, cfg);
    return kExitOk;
}

template <class S>
int run_deploy(const gup::Config& cfg, const std::string& in_path, std::string out_path) {
    auto manifest = gup::begin_manifest("deploy", cfg);
    if (out_path.empty()) out_path = cfg.run.out_dir + "/deployed.gupz";

    auto loaded = gup::load_checkpoint<S>(in_path);
    if (loaded.deployed) throw gup::UsageError("checkpoint is already deployed: " + in_path);

    gup::SplitMix64 rng(cfg.run.seed, "deploy.probe");
    gup::Tensor<S> x({1, 3, loaded.config.model.input_h, loaded.config.model.input_w});
    for (auto& v : x.data()) v = static_cast<S>(rng.next_uniform(0.0, 1.0));

    gup::NoGradGuard guard;
    loaded.model.set_train(false);
    auto before = loaded.model.forward(x);
    loaded.model.switch_to_deploy();
    auto after = loaded.model.forward(x);

    double diff = 0.0;
    for (std::size_t i = 0; i < before.numel(); ++i)
        diff = std::max(diff, std::abs(static_cast<double>(before.data()[i]) -
                                       static_cast<double>(after.data()[i])));

    gup::save_checkpoint(out_path, loaded.model, loaded.config);
    const double tol = sizeof(S) == 4 ? 1e-4 : 1e-8;
    std::printf("max_abs_diff=%.3g tolerance=%.0e out=%s\n", diff, tol, out_path.c_str());
    manifest.add_result("max_abs_diff", std::to_string(diff));
    manifest.add_result("out", out_path);
    finish_manifest(manifest, cfg);
    if (diff > tol) {
        std::fprintf(stderr, "error: deployed model diverges from the trained one (%.3g > %.0e)\n", diff, tol);
        return kExitPropertyFailure;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gated pose estimation toolkit"};
    app.require_subcommand(1);

    CommonFlags verify_flags, train_flags, eval_flags, params_flags, deploy_flags;
    std::string resume_from, pred_path, ann_path, metric = "ap", deploy_in, deploy_out;

    CLI::App* cmd_verify = app.add_subcommand("verify", "run the self-check property suite");
    add_common_flags(cmd_verify, verify_flags);

    CLI::App* cmd_train = app.add_subcommand("train-toy", "train the toy model on synthetic data");
    add_common_flags(cmd_train, train_flags);
    cmd_train->add_option("--resume", resume_from, "checkpoint to resume from");

    CLI::App* cmd_eval = app.add_subcommand("eval", "score predictions against annotations");
    add_common_flags(cmd_eval, eval_flags);
    cmd_eval->add_option("--pred", pred_path, "prediction file")->required();
    cmd_eval->add_option("--ann", ann_path, "annotation file")->required();
    cmd_eval->add_option("--metric", metric, "ap or pckh")->check(CLI::IsMember({"ap", "pckh"}));

    CLI::App* cmd_params = app.add_subcommand("params", "report parameter counts");
    add_common_flags(cmd_params, params_flags);

    CLI::App* cmd_deploy = app.add_subcommand("deploy", "merge reparam branches and save");
    add_common_flags(cmd_deploy, deploy_flags);
    cmd_deploy->add_option("--in", deploy_in, "trained checkpoint")->required();
    cmd_deploy->add_option("--out", deploy_out, "merged checkpoint path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        // Help and version requests exit cleanly; anything else is usage.
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (cmd_verify->parsed()) {
            const auto cfg = make_config(verify_flags);
            return with_precision(cfg, [&](auto tag) { return run_verify<decltype(tag)>(cfg); });
        }
        if (cmd_train->parsed()) {
            const auto cfg = make_config(train_flags);
            return with_precision(cfg, [&](auto tag) { return run_train_toy<decltype(tag)>(cfg, resume_from); });
        }
        if (cmd_eval->parsed()) {
            const auto cfg = make_config(eval_flags);
            return run_eval(cfg, pred_path, ann_path, metric);
        }
        if (cmd_params->parsed()) {
            const auto cfg = make_config(params_flags);
            return with_precision(cfg, [&](auto tag) { return run_params<decltype(tag)>(cfg); });
        }
        if (cmd_deploy->parsed()) {
            const auto cfg = make_config(deploy_flags);
            return with_precision(cfg,
                                  [&](auto tag) { return run_deploy<decltype(tag)>(cfg, deploy_in, deploy_out); });
        }
    } catch (const gup::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const gup::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const gup::ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return kExitUsage;
    } catch (const gup::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitUsage;
    } catch (const gup::Error& e) {
        // Shape, spec, and state violations indicate a failed property of
        // the data or model rather than bad usage.
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitPropertyFailure;
    }
    return kExitUsage;
}
