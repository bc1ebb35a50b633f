// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "gup/checkpoint.hpp"
#include "gup/config.hpp"
#include "gup/model.hpp"
#include "gup/rng.hpp"

namespace {

gup::Config tiny_config() {
    gup::Config cfg;
    cfg.model = gup::ModelConfig::toy_preset();
    cfg.model.input_h = 64;
    cfg.model.input_w = 32;
    cfg.model.joints = 3;
    cfg.model.channels = {8, 12, 16, 20};
    cfg.model.stem_channels = 8;
    cfg.model.decoder_channels = 16;
    cfg.model.depths = {1, 1, 1, 1};
    cfg.model.kernels = {3, 7, 7, 7};
    cfg.run.seed = 415;
    cfg.finalize();
    return cfg;
}

template <class S>
gup::Tensor<S> probe_input(const gup::Config& cfg, std::uint64_t seed) {
    gup::SplitMix64 rng(seed, "ckpt.probe");
    gup::Tensor<S> x({1, 3, cfg.model.input_h, cfg.model.input_w});
    for (auto& v : x.data()) v = static_cast<S>(rng.next_uniform(0.0, 1.0));
    return x;
}

}  // namespace

TEST_CASE("checkpoints restore the exact forward pass") {
    const auto cfg = tiny_config();
    gup::GatedUniPoseModel<float> model(cfg.model);
    model.set_train(false);

    const std::string path = "/tmp/gup_test_ckpt.gupz";
    gup::save_checkpoint(path, model, cfg);

    auto loaded = gup::load_checkpoint<float>(path);
    REQUIRE(loaded.deployed == false);
    REQUIRE(loaded.config.model.joints == 3);
    REQUIRE(loaded.config.run.seed == 415);

    gup::NoGradGuard guard;
    auto x = probe_input<float>(cfg, 1);
    auto a = model.forward(x);
    loaded.model.set_train(false);
    auto b = loaded.model.forward(x);
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a.data()[i] == b.data()[i]);
}

TEST_CASE("checkpoints carry optimizer extras by name") {
    const auto cfg = tiny_config();
    gup::GatedUniPoseModel<float> model(cfg.model);
    model.set_train(false);

    gup::NamedTensors<float> extras;
    extras.emplace_back("step", gup::Tensor<float>::from_vector({1}, {5.0f}));
    extras.emplace_back("m.stem.proj1.weight", gup::Tensor<float>::from_vector({2}, {0.25f, -1.5f}));

    const std::string path = "/tmp/gup_test_ckpt_extras.gupz";
    gup::save_checkpoint(path, model, cfg, extras);
    auto loaded = gup::load_checkpoint<float>(path);
    REQUIRE(loaded.extras.size() == 2);
    REQUIRE(loaded.extras.count("step") == 1);
    REQUIRE(loaded.extras.at("step").data()[0] == 5.0f);
    REQUIRE(loaded.extras.at("m.stem.proj1.weight").data()[1] == -1.5f);
}

TEST_CASE("a deployed checkpoint loads into the merged topology") {
    const auto cfg = tiny_config();
    gup::GatedUniPoseModel<float> model(cfg.model);
    model.set_train(false);

    gup::NoGradGuard guard;
    auto x = probe_input<float>(cfg, 2);
    auto before = model.forward(x);
    model.switch_to_deploy();
    REQUIRE(model.is_deployed());

    const std::string path = "/tmp/gup_test_ckpt_deploy.gupz";
    gup::save_checkpoint(path, model, cfg);

    auto loaded = gup::load_checkpoint<float>(path);
    REQUIRE(loaded.deployed);
    REQUIRE(loaded.model.is_deployed());
    loaded.model.set_train(false);
    auto after = loaded.model.forward(x);
    for (std::size_t i = 0; i < before.numel(); ++i)
        REQUIRE_THAT(static_cast<double>(after.data()[i]),
                     Catch::Matchers::WithinAbs(static_cast<double>(before.data()[i]), 1e-4));
}

TEST_CASE("checkpoint loading validates file identity and precision") {
    const auto cfg = tiny_config();
    gup::GatedUniPoseModel<float> model(cfg.model);
    model.set_train(false);
    const std::string path = "/tmp/gup_test_ckpt_bad.gupz";
    gup::save_checkpoint(path, model, cfg);

    REQUIRE_THROWS_AS(gup::load_checkpoint<double>(path), gup::IoError);
    REQUIRE_THROWS_AS(gup::load_checkpoint<float>("/tmp/gup_no_such.gupz"), gup::IoError);

    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        std::fputs("NOPE", f);
        std::fclose(f);
    }
    REQUIRE_THROWS_AS(gup::load_checkpoint<float>(path), gup::IoError);
}

TEST_CASE("truncated checkpoints are reported as read failures") {
    const auto cfg = tiny_config();
    gup::GatedUniPoseModel<float> model(cfg.model);
    model.set_train(false);
    const std::string path = "/tmp/gup_test_ckpt_trunc.gupz";
    gup::save_checkpoint(path, model, cfg);

    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    REQUIRE_THROWS_AS(gup::load_checkpoint<float>(path), gup::IoError);
}
