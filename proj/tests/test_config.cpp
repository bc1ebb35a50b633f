// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <string>

#include "gup/config.hpp"
#include "gup/model.hpp"

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
    const std::string path = std::string("/tmp/gup_cfg_") + name;
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs(body.c_str(), f);
    std::fclose(f);
    return path;
}

}  // namespace

TEST_CASE("config text parses keys, comments, and blank lines") {
    gup::Config cfg = gup::parse_config_text(
        "# comment\n"
        "\n"
        "seed = 7\n"
        "precision = f64\n"
        "train.steps = 25\n"
        "train.lr = 0.005\n"
        "model.joints = 6\n"
        "model.channels = 8, 16, 24, 32\n"
        "model.use_gconv = false\n");
    REQUIRE(cfg.run.seed == 7);
    REQUIRE(cfg.run.precision == "f64");
    REQUIRE(cfg.train.steps == 25);
    REQUIRE(cfg.train.lr == 0.005);
    REQUIRE(cfg.model.joints == 6);
    const std::vector<std::size_t> want_channels{8, 16, 24, 32};
    REQUIRE(cfg.model.channels == want_channels);
    REQUIRE(cfg.model.use_gconv == false);
}

TEST_CASE("unknown keys and bad values are rejected by name") {
    REQUIRE_THROWS_WITH(gup::parse_config_text("model.depth = 3\n"),
                        Catch::Matchers::ContainsSubstring("unknown config key 'model.depth'"));
    REQUIRE_THROWS_AS(gup::parse_config_text("train.steps = banana\n"), gup::ConfigError);
    REQUIRE_THROWS_AS(gup::parse_config_text("train.lr = 1e\n"), gup::ConfigError);
    REQUIRE_THROWS_AS(gup::parse_config_text("model.use_glace = maybe\n"), gup::ConfigError);
    REQUIRE_THROWS_AS(gup::parse_config_text("seed 42\n"), gup::ConfigError);
}

TEST_CASE("preset selection applies before later overrides") {
    gup::Config cfg = gup::parse_config_text(
        "model.preset = paper\n"
        "model.joints = 14\n");
    REQUIRE(cfg.model.stem_channels == 768);
    REQUIRE(cfg.model.input_h == 256);
    REQUIRE(cfg.model.joints == 14);

    // The same keys in the opposite order: the preset wins because it is
    // applied last, line by line.
    gup::Config flipped = gup::parse_config_text(
        "model.joints = 14\n"
        "model.preset = paper\n");
    REQUIRE(flipped.model.joints == 17);
}

TEST_CASE("serialized config text reparses to the same configuration") {
    gup::Config cfg;
    cfg.run.seed = 123;
    cfg.train.steps = 77;
    cfg.train.lr = 0.00125;
    cfg.model.joints = 5;
    cfg.model.use_dysample = false;
    cfg.synth.jitter = 3.5;
    cfg.finalize();

    gup::Config back = gup::parse_config_text(cfg.to_text());
    back.finalize();
    REQUIRE(back.to_text() == cfg.to_text());
    REQUIRE(back.run.seed == 123);
    REQUIRE(back.train.lr == 0.00125);
    REQUIRE(back.model.use_dysample == false);
    REQUIRE(back.synth.jitter == 3.5);
}

TEST_CASE("finalize couples the synthetic data shape to the model") {
    gup::Config cfg;
    cfg.run.seed = 9;
    cfg.model.joints = 6;
    cfg.model.input_h = 64;
    cfg.model.input_w = 64;
    cfg.finalize();
    REQUIRE(cfg.synth.joints == 6);
    REQUIRE(cfg.synth.image_h == 64);
    REQUIRE(cfg.synth.image_w == 64);
    REQUIRE(cfg.synth.seed == 9);
    REQUIRE(cfg.model.seed == 9);
}

TEST_CASE("finalize validates the run settings") {
    gup::Config bad_precision;
    bad_precision.run.precision = "f16";
    REQUIRE_THROWS_AS(bad_precision.finalize(), gup::ConfigError);

    gup::Config bad_holdout;
    bad_holdout.synth.count = 8;
    bad_holdout.train.holdout = 8;
    REQUIRE_THROWS_AS(bad_holdout.finalize(), gup::ConfigError);

    gup::Config bad_kernel;
    bad_kernel.model.kernels = {3, 8, 7, 7};
    REQUIRE_THROWS_AS(bad_kernel.finalize(), gup::ConfigError);
}

TEST_CASE("config files load through the same path as inline text") {
    const std::string path = write_temp("load.cfg",
                                        "seed = 31\n"
                                        "out_dir = /tmp/gup_cfg_out\n"
                                        "train.batch = 3\n");
    gup::Config cfg = gup::load_config(path);
    REQUIRE(cfg.run.seed == 31);
    REQUIRE(cfg.run.out_dir == "/tmp/gup_cfg_out");
    REQUIRE(cfg.train.batch == 3);
    REQUIRE_THROWS_AS(gup::load_config("/tmp/gup_cfg_missing.cfg"), gup::IoError);
}

TEST_CASE("model configs validate their own invariants") {
    gup::ModelConfig m = gup::ModelConfig::toy_preset();
    m.input_h = 100;  // not divisible by the total stride
    REQUIRE_THROWS_AS(m.validate(), gup::ConfigError);

    m = gup::ModelConfig::toy_preset();
    m.channels = {16, 32, 64};
    REQUIRE_THROWS_AS(m.validate(), gup::ConfigError);

    m = gup::ModelConfig::toy_preset();
    m.kernels = {3, 13, 13, 12};
    REQUIRE_THROWS_AS(m.validate(), gup::ConfigError);

    m = gup::ModelConfig::toy_preset();
    m.joints = 0;
    REQUIRE_THROWS_AS(m.validate(), gup::ConfigError);

    REQUIRE_NOTHROW(gup::ModelConfig::toy_preset().validate());
    REQUIRE_NOTHROW(gup::ModelConfig::paper_preset().validate());
}
