// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gup/codec.hpp"
#include "gup/common.hpp"

namespace gup {

/// Per-joint falloff constants plus the instance scale (square root of the
/// object area in pixels).
struct OksParams {
    std::vector<double> k;
    double scale = 1.0;
};

/// Standard 17-joint falloff table (twice the published per-joint sigmas).
inline std::vector<double> coco_k_table() {
    return {0.052, 0.050, 0.050, 0.070, 0.070, 0.158, 0.158, 0.144, 0.144,
            0.124, 0.124, 0.214, 0.214, 0.174, 0.174, 0.178, 0.178};
}

/// 14-joint falloff table for the crowd benchmark layout (shoulders, elbows,
/// wrists, hips, knees, ankles, head top, neck).
inline std::vector<double> crowdpose_k_table() {
    return {0.158, 0.158, 0.144, 0.144, 0.124, 0.124, 0.214, 0.214, 0.174, 0.174, 0.178, 0.178, 0.158, 0.158};
}

/// Object keypoint similarity over the labeled ground-truth joints.
inline double oks(const KeypointSet& pred, const KeypointSet& gt, const OksParams& params) {
    if (pred.joints.size() != gt.joints.size())
        throw ShapeError("oks: joint count mismatch " + std::to_string(pred.joints.size()) + " vs " +
                         std::to_string(gt.joints.size()));
    if (params.k.size() != gt.joints.size())
        throw ShapeError("oks: falloff table has " + std::to_string(params.k.size()) + " entries for " +
                         std::to_string(gt.joints.size()) + " joints");
    if (params.scale <= 0.0) throw UsageError("oks: scale must be positive");
    double acc = 0.0;
    std::size_t labeled = 0;
    for (std::size_t i = 0; i < gt.joints.size(); ++i) {
        if (gt.joints[i].v <= 0) continue;
        if (params.k[i] <= 0.0) throw UsageError("oks: falloff constants must be positive");
        const double dx = pred.joints[i].x - gt.joints[i].x;
        const double dy = pred.joints[i].y - gt.joints[i].y;
        const double denom = 2.0 * params.scale * params.scale * params.k[i] * params.k[i];
        acc += std::exp(-(dx * dx + dy * dy) / denom);
        ++labeled;
    }
    if (labeled == 0) throw UsageError("oks: ground truth has no labeled joints");
    return acc / static_cast<double>(labeled);
}

/// One predicted instance with its detection score.
struct ScoredInstance {
    int image_id = 0;
    double score = 0.0;
    KeypointSet keypoints;
};

/// One ground-truth instance. head_size < 0 means not provided.
struct GtInstance {
    int image_id = 0;
    KeypointSet keypoints;
    double area = 1.0;
    double head_size = -1.0;
};

/// Result container shared by the metric families. AP fills thresholds and
/// per_threshold; PCKh fills joint_names and per_joint. Values are in [0,1].
struct EvalReport {
    std::string family;
    double overall = 0.0;
    std::vector<double> thresholds;
    std::vector<double> per_threshold;
    std::vector<std::string> joint_names;
    std::vector<double> per_joint;
    std::size_t matched = 0;
    std::size_t unmatched = 0;
};

inline std::vector<double> default_oks_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 9; ++i) t.push_back(0.50 + 0.05 * i);
    return t;
}

namespace detail {

struct RankedPrediction {
    double score;
    std::size_t input_index;
    bool matched;
};

}  // namespace detail

/// OKS-threshold average precision with greedy per-image matching and
/// 101-point interpolation. Per image and threshold, predictions are taken
/// in descending score order and each grabs the unmatched ground truth with
/// the highest OKS when that OKS reaches the threshold. The PR curve ranks
/// all predictions globally by score (ties broken by input order). Ground
/// truths with no labeled joints are unevaluable and excluded. The matched
/// count reports true positives at the first (loosest) threshold.
inline EvalReport average_precision(const std::vector<ScoredInstance>& predictions,
                                    const std::vector<GtInstance>& ground_truths, const std::vector<double>& k_table,
                                    std::vector<double> thresholds = default_oks_thresholds()) {
    if (thresholds.empty()) throw UsageError("average_precision: no thresholds");

    EvalReport report;
    report.family = "ap";
    report.thresholds = thresholds;

    std::map<int, std::vector<std::size_t>> gt_by_image;
    std::size_t total_gt = 0;
    for (std::size_t g = 0; g < ground_truths.size(); ++g) {
        bool any_labeled = false;
        for (const auto& j : ground_truths[g].keypoints.joints)
            if (j.v > 0) any_labeled = true;
        if (!any_labeled) continue;
        gt_by_image[ground_truths[g].image_id].push_back(g);
        ++total_gt;
    }

    std::map<int, std::vector<std::size_t>> pred_by_image;
    for (std::size_t p = 0; p < predictions.size(); ++p) pred_by_image[predictions[p].image_id].push_back(p);

    if (total_gt == 0 || predictions.empty()) {
        report.per_threshold.assign(thresholds.size(), 0.0);
        report.unmatched = total_gt;
        return report;
    }

    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        const double thr = thresholds[ti];
        std::vector<detail::RankedPrediction> ranked;
        ranked.reserve(predictions.size());

        for (const auto& [image_id, pred_idx] : pred_by_image) {
            std::vector<std::size_t> order = pred_idx;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return predictions[a].score > predictions[b].score;
            });
            std::vector<char> gt_taken;
            const std::vector<std::size_t>* gts = nullptr;
            auto it = gt_by_image.find(image_id);
            if (it != gt_by_image.end()) {
                gts = &it->second;
                gt_taken.assign(gts->size(), 0);
            }
            for (std::size_t pi : order) {
                bool matched = false;
                if (gts != nullptr) {
                    double best_oks = -1.0;
                    std::size_t best_slot = 0;
                    for (std::size_t s = 0; s < gts->size(); ++s) {
                        if (gt_taken[s]) continue;
                        const GtInstance& gt = ground_truths[(*gts)[s]];
                        OksParams params{k_table, std::sqrt(std::max(gt.area, 1e-12))};
                        const double o = oks(predictions[pi].keypoints, gt.keypoints, params);
                        if (o > best_oks) {
                            best_oks = o;
                            best_slot = s;
                        }
                    }
                    if (best_oks >= thr) {
                        gt_taken[best_slot] = 1;
                        matched = true;
                    }
                }
                ranked.push_back({predictions[pi].score, pi, matched});
            }
        }

        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.input_index < b.input_index;
        });

        std::size_t tp = 0;
        std::vector<double> precision(ranked.size()), recall(ranked.size());
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            if (ranked[i].matched) ++tp;
            precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
            recall[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
        }
        if (ti == 0) report.matched = tp;

        // Precision envelope: best precision achievable at recall >= r.
        for (std::size_t i = ranked.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

        double ap = 0.0;
        std::size_t cursor = 0;
        for (int r = 0; r <= 100; ++r) {
            const double level = static_cast<double>(r) / 100.0;
            while (cursor < ranked.size() && recall[cursor] < level) ++cursor;
            if (cursor < ranked.size()) ap += precision[cursor];
        }
        report.per_threshold.push_back(ap / 101.0);
    }

    report.unmatched = total_gt - report.matched;
    double sum = 0.0;
    for (double v : report.per_threshold) sum += v;
    report.overall = sum / static_cast<double>(report.per_threshold.size());
    return report;
}

namespace detail {

/// 16-joint layout with left/right pooled scoring groups.
struct PckhGroup {
    const char* name;
    std::array<std::size_t, 2> joints;
};

inline const std::array<PckhGroup, 7>& pckh_groups() {
    static const std::array<PckhGroup, 7> groups = {{{"Head", {8, 9}},
                                                     {"Shoulder", {12, 13}},
                                                     {"Elbow", {11, 14}},
                                                     {"Wrist", {10, 15}},
                                                     {"Hip", {2, 3}},
                                                     {"Knee", {1, 4}},
                                                     {"Ankle", {0, 5}}}};
    return groups;
}

}  // namespace detail

/// Head-normalized keypoint correctness with left/right pooled groups over
/// the 16-joint layout. A labeled joint counts as correct when its distance
/// to the ground truth is at most fraction * head_size (closed bound).
/// Predictions pair with ground truths of the same image id in file order;
/// a ground truth without a paired prediction counts all its labeled joints
/// as misses. Records without a head size are skipped and counted in
/// `unmatched`. The mean pools all evaluated joints.
inline EvalReport pckh(const std::vector<ScoredInstance>& predictions, const std::vector<GtInstance>& ground_truths,
                       double fraction = 0.5) {
    if (fraction <= 0.0) throw UsageError("pckh: fraction must be positive");

    std::map<int, std::vector<std::size_t>> pred_by_image;
    for (std::size_t p = 0; p < predictions.size(); ++p) pred_by_image[predictions[p].image_id].push_back(p);
    std::map<int, std::size_t> next_slot;

    const auto& groups = detail::pckh_groups();
    std::array<std::size_t, 7> correct{};
    std::array<std::size_t, 7> evaluated{};

    EvalReport report;
    report.family = "pckh";
    report.thresholds = {fraction};

    for (const GtInstance& gt : ground_truths) {
        if (gt.head_size <= 0.0) {
            ++report.unmatched;
            continue;
        }
        if (gt.keypoints.joints.size() != 16)
            throw ShapeError("pckh: expected 16 joints per instance, got " +
                             std::to_string(gt.keypoints.joints.size()));

        const KeypointSet* pred = nullptr;
        auto it = pred_by_image.find(gt.image_id);
        if (it != pred_by_image.end()) {
            std::size_t& slot = next_slot[gt.image_id];
            if (slot < it->second.size()) {
                const KeypointSet& k = predictions[it->second[slot]].keypoints;
                if (k.joints.size() != 16)
                    throw ShapeError("pckh: expected 16 joints per prediction, got " +
                                     std::to_string(k.joints.size()));
                pred = &k;
                ++slot;
            }
        }
        ++report.matched;

        const double limit = fraction * gt.head_size;
        for (std::size_t g = 0; g < groups.size(); ++g)
            for (std::size_t j : groups[g].joints) {
                if (gt.keypoints.joints[j].v <= 0) continue;
                ++evaluated[g];
                if (pred == nullptr) continue;
                const double dx = pred->joints[j].x - gt.keypoints.joints[j].x;
                const double dy = pred->joints[j].y - gt.keypoints.joints[j].y;
                if (std::sqrt(dx * dx + dy * dy) <= limit) ++correct[g];
            }
    }

    std::size_t total_correct = 0, total_evaluated = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        report.joint_names.push_back(groups[g].name);
        report.per_joint.push_back(evaluated[g] == 0
                                       ? 0.0
                                       : static_cast<double>(correct[g]) / static_cast<double>(evaluated[g]));
        total_correct += correct[g];
        total_evaluated += evaluated[g];
    }
    report.overall =
        total_evaluated == 0 ? 0.0 : static_cast<double>(total_correct) / static_cast<double>(total_evaluated);
    return report;
}

}  // namespace gup
