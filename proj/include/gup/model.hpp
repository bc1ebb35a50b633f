// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gup/blocks.hpp"

namespace gup {

/// Full architectural description. Models are built deterministically from
/// a config plus its seed.
struct ModelConfig {
    std::size_t input_h = 256, input_w = 192;
    std::size_t joints = 17;
    std::size_t stem_channels = 768;
    std::vector<std::size_t> depths = {3, 3, 27, 3};
    std::vector<std::size_t> channels = {128, 256, 512, 1024};
    std::vector<std::size_t> kernels = {3, 13, 13, 13};
    std::size_t decoder_channels = 256;
    bool use_gconv = true;
    bool use_glace = true;
    bool use_dysample = true;
    std::uint64_t seed = 42;

    static constexpr std::size_t heatmap_stride = 4;

    std::size_t stage_count() const { return depths.size(); }

    /// Stem stride (2) times one stride-2 downsample per stage.
    std::size_t total_stride() const { return std::size_t(2) << stage_count(); }

    std::size_t heatmap_h() const { return input_h / heatmap_stride; }
    std::size_t heatmap_w() const { return input_w / heatmap_stride; }

    void validate() const {
        if (joints == 0) throw ConfigError("model.joints: must be positive");
        if (stem_channels == 0) throw ConfigError("model.stem_channels: must be positive");
        if (decoder_channels == 0) throw ConfigError("model.decoder_channels: must be positive");
        if (depths.empty()) throw ConfigError("model.depths: need at least one stage");
        if (channels.size() != depths.size() || kernels.size() != depths.size())
            throw ConfigError("model.channels/model.kernels: per-stage lists must match model.depths length");
        for (std::size_t i = 0; i < depths.size(); ++i) {
            if (depths[i] == 0) throw ConfigError("model.depths: stage " + std::to_string(i) + " must be positive");
            if (channels[i] == 0) throw ConfigError("model.channels: stage " + std::to_string(i) + " must be positive");
            if (kernels[i] % 2 == 0)
                throw ConfigError("model.kernels: stage " + std::to_string(i) + " kernel " +
                                  std::to_string(kernels[i]) + " must be odd");
            if (i > 0 && channels[i] < channels[i - 1])
                throw ConfigError("model.channels: stage " + std::to_string(i) + " decreases (" +
                                  std::to_string(channels[i - 1]) + " -> " + std::to_string(channels[i]) + ")");
        }
        // The decoder pools the 1/4-resolution fused map by another factor 4,
        // so inputs must divide by both the backbone stride and 16.
        const std::size_t div = std::max<std::size_t>(total_stride(), 16);
        if (input_h == 0 || input_h % div != 0)
            throw ConfigError("model.input_h: " + std::to_string(input_h) + " not divisible by " + std::to_string(div));
        if (input_w == 0 || input_w % div != 0)
            throw ConfigError("model.input_w: " + std::to_string(input_w) + " not divisible by " + std::to_string(div));
    }

    static ModelConfig paper_preset() { return ModelConfig{}; }

    static ModelConfig toy_preset() {
        ModelConfig c;
        c.input_h = 128;
        c.input_w = 96;
        c.joints = 4;
        c.stem_channels = 16;
        c.depths = {1, 1, 1, 1};
        c.channels = {16, 32, 64, 128};
        c.kernels = {3, 7, 7, 7};
        c.decoder_channels = 32;
        return c;
    }

    static ModelConfig preset(const std::string& name) {
        if (name == "paper") return paper_preset();
        if (name == "toy") return toy_preset();
        throw ConfigError("model.preset: unknown preset '" + name + "' (expected paper or toy)");
    }
};

// ---------------------------------------------------------------------------
// The network: downsampling stem, stages of residual blocks each entered
// through a stride-2 downsample, an upsample-and-concat head fused at the
// stage-1 (1/4 input) resolution, and a pool -> deconv x2 -> 1x1 decoder
// producing heatmaps at 1/4 of the input.
// ---------------------------------------------------------------------------

template <class S>
class GatedUniPoseModel {
public:
    struct Stage {
        GlaceEmbed<S> down;
        std::vector<GatedUniPoseBlock<S>> blocks;
    };

    explicit GatedUniPoseModel(const ModelConfig& config) : cfg_(config) {
        cfg_.validate();
        const std::uint64_t seed = cfg_.seed;

        if (cfg_.use_glace)
            stem_ = GlaceEmbed<S>::stem(seed, "stem.glace", 3, cfg_.stem_channels);
        else
            stem_ = GlaceEmbed<S>::downsample(seed, "stem.plain", 3, cfg_.stem_channels);

        std::size_t in_ch = cfg_.stem_channels;
        for (std::size_t i = 0; i < cfg_.stage_count(); ++i) {
            Stage st;
            const std::string sname = "stages." + std::to_string(i);
            const char* kind = cfg_.use_glace ? ".down.glace" : ".down.plain";
            st.down = GlaceEmbed<S>::downsample(seed, sname + kind, in_ch, cfg_.channels[i]);
            for (std::size_t b = 0; b < cfg_.depths[i]; ++b)
                st.blocks.emplace_back(seed, sname + ".blocks." + std::to_string(b), cfg_.channels[i],
                                       cfg_.kernels[i], cfg_.use_gconv);
            stages_.push_back(std::move(st));
            in_ch = cfg_.channels[i];
        }

        if (cfg_.use_dysample)
            for (std::size_t i = 1; i < cfg_.stage_count(); ++i)
                ups_.emplace_back(seed, "head.up." + std::to_string(i), cfg_.channels[i], std::size_t(1) << i);

        std::size_t concat_ch = 0;
        for (std::size_t c : cfg_.channels) concat_ch += c;
        fuse_ = ConvLayer<S>(seed, "head.fuse", concat_ch, cfg_.decoder_channels, 1, Conv2dSpec{}, true);

        const Conv2dSpec up{2, 1, 1, 1};
        deconv1_ = DeconvLayer<S>(seed, "decoder.deconv1", cfg_.decoder_channels, cfg_.decoder_channels, 4, up, false);
        dnorm1_ = BatchNormLayer<S>(cfg_.decoder_channels);
        deconv2_ = DeconvLayer<S>(seed, "decoder.deconv2", cfg_.decoder_channels, cfg_.decoder_channels, 4, up, false);
        dnorm2_ = BatchNormLayer<S>(cfg_.decoder_channels);
        out_ = ConvLayer<S>(seed, "decoder.out", cfg_.decoder_channels, cfg_.joints, 1, Conv2dSpec{}, true);
    }

    const ModelConfig& config() const { return cfg_; }
    bool training() const { return training_; }
    void set_train(bool on) { training_ = on; }
    bool is_deployed() const { return deployed_; }

    /// Stem plus per-stage features, outermost first.
    std::vector<Tensor<S>> backbone_features(const Tensor<S>& images) {
        Tensor<S> h = stem_.forward(images, training_);
        std::vector<Tensor<S>> feats;
        feats.reserve(stages_.size());
        for (auto& st : stages_) {
            h = st.down.forward(h, training_);
            for (auto& b : st.blocks) h = b.forward(h, training_);
            feats.push_back(h);
        }
        return feats;
    }

    /// Upsamples every stage feature to the stage-1 resolution, concatenates
    /// along channels and fuses with a 1x1 conv.
    Tensor<S> head_fuse(const std::vector<Tensor<S>>& feats) {
        if (feats.size() != stages_.size())
            throw UsageError("head_fuse: expected " + std::to_string(stages_.size()) + " stage features, got " +
                             std::to_string(feats.size()));
        const std::size_t th = feats[0].dim(2), tw = feats[0].dim(3);
        std::vector<Tensor<S>> aligned;
        aligned.push_back(feats[0]);
        for (std::size_t i = 1; i < feats.size(); ++i) {
            const std::size_t s = std::size_t(1) << i;
            Tensor<S> u = cfg_.use_dysample ? ups_[i - 1].forward(feats[i]) : bilinear_upsample(feats[i], s);
            if (u.dim(2) != th || u.dim(3) != tw)
                throw ShapeError("head_fuse: stage " + std::to_string(i) + " upsampled to " + shape_str(u.shape()) +
                                 ", expected " + std::to_string(th) + "x" + std::to_string(tw));
            aligned.push_back(u);
        }
        return fuse_.forward(concat_channels(aligned));
    }

    Tensor<S> decode(const Tensor<S>& fused) {
        Tensor<S> h = avg_pool2d(fused, 4);
        h = gelu(dnorm1_.forward(deconv1_.forward(h), training_));
        h = gelu(dnorm2_.forward(deconv2_.forward(h), training_));
        return out_.forward(h);
    }

    Tensor<S> forward(const Tensor<S>& images) {
        if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != cfg_.input_h || images.dim(3) != cfg_.input_w)
            throw ShapeError("forward: expected [N,3," + std::to_string(cfg_.input_h) + "," +
                             std::to_string(cfg_.input_w) + "], got " + shape_str(images.shape()));
        return decode(head_fuse(backbone_features(images)));
    }

    /// Merges every reparam mixer into its dense deploy form. Eval mode only.
    void switch_to_deploy() {
        if (training_) throw StateError("switch_to_deploy: model must be in eval mode");
        for (auto& st : stages_)
            for (auto& b : st.blocks)
                if (b.has_reparam_mixer() && !b.drb.deployed) b.drb.merge();
        deployed_ = true;
    }

    ParamList<S> params() const {
        ParamList<S> sink;
        stem_.collect(sink);
        for (const auto& st : stages_) {
            st.down.collect(sink);
            for (const auto& b : st.blocks) b.collect(sink);
        }
        for (const auto& u : ups_) u.collect(sink);
        fuse_.collect("head.fuse", sink);
        deconv1_.collect("decoder.deconv1", sink);
        dnorm1_.collect("decoder.norm1", sink);
        deconv2_.collect("decoder.deconv2", sink);
        dnorm2_.collect("decoder.norm2", sink);
        out_.collect("decoder.out", sink);
        return sink;
    }

    std::size_t parameter_count() const {
        const ParamList<S> list = params();
        std::size_t n = 0;
        for (const auto& p : list.entries())
            if (p.trainable) n += p.tensor.numel();
        return n;
    }

    /// Applies fn(name, tensor, trainable) to every named tensor. Tensors are
    /// shared handles, so callers can fill model state through them.
    template <class Fn>
    void visit_params(Fn&& fn) {
        const ParamList<S> list = params();
        for (const auto& p : list.entries()) fn(p.name, p.tensor, p.trainable);
    }

    void force_deployed_topology() {
        // Structural switch used when loading a deployed checkpoint: the
        // merged weights are placeholders until the record fill overwrites
        // them.
        switch_to_deploy();
    }

private:
    ModelConfig cfg_;
    bool training_ = false;
    bool deployed_ = false;
    GlaceEmbed<S> stem_;
    std::vector<Stage> stages_;
    std::vector<DySampleUpsampler<S>> ups_;
    ConvLayer<S> fuse_;
    DeconvLayer<S> deconv1_, deconv2_;
    BatchNormLayer<S> dnorm1_, dnorm2_;
    ConvLayer<S> out_;
};

template <class S>
GatedUniPoseModel<S> build_model(const ModelConfig& config) {
    return GatedUniPoseModel<S>(config);
}

}  // namespace gup
