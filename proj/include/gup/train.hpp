// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "gup/checkpoint.hpp"
#include "gup/codec.hpp"
#include "gup/common.hpp"
#include "gup/config.hpp"
#include "gup/data.hpp"
#include "gup/losses.hpp"
#include "gup/model.hpp"
#include "gup/optim.hpp"
#include "gup/rng.hpp"
#include "gup/tensor.hpp"

namespace gup {

struct TrainOutcome {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double pck2 = 0.0;
    std::size_t steps_run = 0;
    std::string checkpoint_path;
    std::vector<double> epoch_losses;
    std::vector<double> epoch_pck;
};

namespace detail {

/// Batch for one step, drawn from a fixed seeded permutation of the training
/// pool that is cycled endlessly. The schedule is a pure function of (seed,
/// step), so a resumed run sees the batches it would have seen uninterrupted,
/// and every epoch replays the same batch sequence, which makes zero-lr
/// training repeat its epoch losses bit for bit.
inline std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t batch,
                                              std::size_t pool) {
    std::vector<std::size_t> perm(pool);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    SplitMix64 rng(seed, "batch.permutation");
    for (std::size_t i = pool - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
        std::swap(perm[i], perm[j]);
    }
    std::vector<std::size_t> idx(batch);
    for (std::size_t i = 0; i < batch; ++i) idx[i] = perm[(step * batch + i) % pool];
    return idx;
}

template <class S>
Tensor<S> stack_images(const std::vector<SyntheticSample>& data, const std::vector<std::size_t>& idx) {
    const auto& first = data[idx[0]].image;
    const std::size_t per = first.numel();
    Tensor<S> out({idx.size(), first.dim(0), first.dim(1), first.dim(2)});
    for (std::size_t b = 0; b < idx.size(); ++b)
        for (std::size_t i = 0; i < per; ++i)
            out.data()[b * per + i] = static_cast<S>(data[idx[b]].image.data()[i]);
    return out;
}

template <class S>
Tensor<S> stack_targets(const std::vector<Tensor<S>>& targets, const std::vector<std::size_t>& idx) {
    const auto& first = targets[idx[0]];
    const std::size_t per = first.numel();
    Tensor<S> out({idx.size(), first.dim(0), first.dim(1), first.dim(2)});
    for (std::size_t b = 0; b < idx.size(); ++b)
        for (std::size_t i = 0; i < per; ++i) out.data()[b * per + i] = targets[idx[b]].data()[i];
    return out;
}

}  // namespace detail

/// Fraction of held-out joints whose decoded position lands within
/// `radius_px` of the ground truth (eval mode, gradients off).
template <class S>
double evaluate_pck(GatedUniPoseModel<S>& model, const std::vector<SyntheticSample>& heldout, double radius_px) {
    if (heldout.empty()) return 0.0;
    const bool was_training = model.training();
    model.set_train(false);
    NoGradGuard guard;
    std::size_t correct = 0, total = 0;
    for (const auto& sample : heldout) {
        std::vector<std::size_t> one{0};
        std::vector<SyntheticSample> view{sample};
        Tensor<S> x = detail::stack_images<S>(view, one);
        Tensor<S> hm = model.forward(x);
        Tensor<S> single({hm.dim(1), hm.dim(2), hm.dim(3)});
        single.data() = hm.data();
        auto decoded = decode_keypoints(single, static_cast<double>(ModelConfig::heatmap_stride));
        for (std::size_t j = 0; j < sample.keypoints.joints.size(); ++j) {
            const double dx = decoded[j].x - sample.keypoints.joints[j].x;
            const double dy = decoded[j].y - sample.keypoints.joints[j].y;
            ++total;
            if (std::sqrt(dx * dx + dy * dy) <= radius_px) ++correct;
        }
    }
    model.set_train(was_training);
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

/// Supervised toy training on the synthetic dataset. The last
/// `config.train.holdout` samples are never trained on. Loss is heatmap MSE
/// plus lambda_od times a distillation term against the rendered target
/// maps standing in as a teacher. Logs line-oriented key=value records:
/// per-step losses every `log_every` steps plus a mean loss and held-out
/// PCK@2px line at the end of every full epoch.
/// When `resume_from` names a checkpoint, model and optimizer state are
/// restored and the run continues from the recorded step with the same batch
/// sequence. A non-finite loss aborts with the offending batch in the
/// message.
template <class S>
TrainOutcome train_toy(GatedUniPoseModel<S>& model, const Config& config, std::ostream& log,
                       const std::string& checkpoint_path = "", const std::string& resume_from = "") {
    const auto data = generate_synthetic(config.synth);
    if (config.train.holdout >= data.size())
        throw ConfigError("train.holdout: must leave at least one training sample");
    const std::size_t train_count = data.size() - config.train.holdout;
    std::vector<SyntheticSample> heldout(data.begin() + static_cast<std::ptrdiff_t>(train_count), data.end());

    const std::size_t hm_h = config.model.heatmap_h(), hm_w = config.model.heatmap_w();
    std::vector<Tensor<S>> targets;
    targets.reserve(train_count);
    for (std::size_t i = 0; i < train_count; ++i)
        targets.push_back(
            encode_gaussian<S>(data[i].keypoints, hm_h, hm_w, config.train.sigma,
                               static_cast<double>(ModelConfig::heatmap_stride)));

    AdamOptimizer<S> adam(config.train.lr);
    std::size_t start_step = 0;
    if (!resume_from.empty()) {
        auto loaded = load_checkpoint<S>(resume_from);
        if (loaded.config.model.joints != config.model.joints)
            throw ConfigError("resume: checkpoint joints " + std::to_string(loaded.config.model.joints) +
                              " do not match config joints " + std::to_string(config.model.joints));
        model = std::move(loaded.model);
        adam.load_state(loaded.extras);
        start_step = static_cast<std::size_t>(adam.steps_taken());
        log << "resumed_from=" << resume_from << " step=" << start_step << "\n";
    }

    TrainOutcome outcome;
    model.set_train(true);
    const ParamList<S> params = model.params();

    const std::size_t epoch_len = std::max<std::size_t>(1, train_count / config.train.batch);
    double epoch_sum = 0.0;
    std::size_t epoch_begin = start_step;

    for (std::size_t s = start_step; s < config.train.steps; ++s) {
        if (s % epoch_len == 0) {
            epoch_sum = 0.0;
            epoch_begin = s;
        }
        const auto idx = detail::batch_indices(config.run.seed, s, config.train.batch, train_count);
        Tensor<S> x = detail::stack_images<S>(data, idx);
        Tensor<S> t = detail::stack_targets<S>(targets, idx);

        Tensor<S> pred = model.forward(x);
        Tensor<S> loss = mse_heatmap_loss(pred, t);
        if (config.train.lambda_od > 0.0) {
            Tensor<S> od = output_distillation_loss(pred, t);
            loss = add(loss, scale(od, static_cast<S>(config.train.lambda_od)));
        }

        const double loss_v = static_cast<double>(loss.item());
        if (!std::isfinite(loss_v)) {
            std::string batch_desc;
            for (std::size_t i : idx) batch_desc += (batch_desc.empty() ? "" : ",") + std::to_string(i);
            throw StateError("training aborted at step " + std::to_string(s) +
                             ": non-finite loss with batch indices [" + batch_desc + "]");
        }
        if (s == start_step) outcome.initial_loss = loss_v;
        outcome.final_loss = loss_v;

        for (const auto& p : params.entries())
            if (p.trainable) {
                Tensor<S> pt = p.tensor;
                pt.zero_grad();
            }
        loss.backward();
        adam.step(params);
        ++outcome.steps_run;
        epoch_sum += loss_v;

        if ((s + 1) % config.train.log_every == 0 || s + 1 == config.train.steps)
            log << "step=" << (s + 1) << " loss=" << loss_v << "\n";

        // A resumed run skips the partially observed epoch it lands in.
        if ((s + 1) % epoch_len == 0 && epoch_begin == s + 1 - epoch_len) {
            const double mean = epoch_sum / static_cast<double>(epoch_len);
            const double pck = evaluate_pck(model, heldout, 2.0);
            outcome.epoch_losses.push_back(mean);
            outcome.epoch_pck.push_back(pck);
            log << "epoch=" << (s + 1) / epoch_len << " loss=" << mean << " pck2=" << pck << "\n";
        }
    }

    outcome.pck2 = evaluate_pck(model, heldout, 2.0);
    log << "pck2=" << outcome.pck2 << "\n";

    if (!checkpoint_path.empty()) {
        model.set_train(false);
        NamedTensors<S> extras = adam.state_tensors();
        save_checkpoint(checkpoint_path, model, config, extras);
        outcome.checkpoint_path = checkpoint_path;
        log << "checkpoint=" << checkpoint_path << "\n";
    }
    return outcome;
}

}  // namespace gup
