// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "gup/codec.hpp"
#include "gup/data.hpp"
#include "gup/rng.hpp"

using gup::AffineTransform;
using gup::Keypoint;
using gup::SplitMix64;
using gup::Tensor;

namespace {

const std::string kFixtures = GUP_FIXTURE_DIR;

std::string temp_path(const std::string& name) {
    return std::string("/tmp/gup_test_") + name;
}

}  // namespace

TEST_CASE("annotation loader reads the minimal committed file") {
    auto result = gup::load_annotations(kFixtures + "/minimal_annotations.json", true);
    REQUIRE(result.total == 1);
    REQUIRE(result.rejected.empty());
    REQUIRE(result.records.size() == 1);

    const auto& rec = result.records[0];
    REQUIRE(rec.id == 11);
    REQUIRE(rec.image_id == 5);
    REQUIRE(rec.category == "person");
    REQUIRE(rec.joints() == 17);
    REQUIRE(rec.area == 64000.0);
    REQUIRE(rec.head_size == -1.0);
    REQUIRE(rec.bbox[0] == 40.0);
    REQUIRE(rec.bbox[3] == 320.0);
    REQUIRE(rec.keypoint_set().joints[2].x == 58.0);
    REQUIRE(rec.keypoint_set().joints[2].v == 2);
}

TEST_CASE("annotation loader names the offending record") {
    REQUIRE_THROWS_WITH(gup::load_annotations(kFixtures + "/bad_annotations.json", true),
                        Catch::Matchers::ContainsSubstring("annotation id 7"));

    auto lenient = gup::load_annotations(kFixtures + "/bad_annotations.json", false);
    REQUIRE(lenient.total == 2);
    REQUIRE(lenient.rejected.size() == 1);
    REQUIRE_THAT(lenient.rejected[0], Catch::Matchers::ContainsSubstring("annotation id 7"));
    REQUIRE(lenient.records.size() == 1);
    REQUIRE(lenient.records[0].id == 5);
    REQUIRE(lenient.records.size() + lenient.rejected.size() == lenient.total);
}

TEST_CASE("annotation loader rejects structural problems") {
    REQUIRE_THROWS_AS(gup::load_annotations("/tmp/gup_no_such_file.json", true), gup::IoError);

    const std::string p = temp_path("not_object.json");
    {
        std::FILE* f = std::fopen(p.c_str(), "w");
        std::fputs("[1, 2, 3]", f);
        std::fclose(f);
    }
    REQUIRE_THROWS_AS(gup::load_annotations(p, true), gup::ParseError);
}

TEST_CASE("prediction files round-trip exactly") {
    std::vector<gup::ScoredInstance> preds;
    SplitMix64 rng(611, "data.preds");
    for (int i = 0; i < 3; ++i) {
        gup::ScoredInstance p;
        p.image_id = i + 1;
        p.score = rng.next_uniform(0.0, 1.0);
        for (int j = 0; j < 17; ++j)
            p.keypoints.joints.push_back(
                {rng.next_uniform(0.0, 300.0), rng.next_uniform(0.0, 300.0), 2});
        preds.push_back(p);
    }

    const std::string p = temp_path("preds.json");
    gup::write_predictions(p, preds);
    auto loaded = gup::load_predictions(p);
    REQUIRE(loaded.size() == preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        REQUIRE(loaded[i].image_id == preds[i].image_id);
        REQUIRE(loaded[i].score == preds[i].score);
        for (std::size_t j = 0; j < 17; ++j) {
            REQUIRE(loaded[i].keypoints.joints[j].x == preds[i].keypoints.joints[j].x);
            REQUIRE(loaded[i].keypoints.joints[j].y == preds[i].keypoints.joints[j].y);
            REQUIRE(loaded[i].keypoints.joints[j].v == preds[i].keypoints.joints[j].v);
        }
    }
}

TEST_CASE("raw tensor files round-trip bit-exactly and check their header") {
    SplitMix64 rng(612, "data.gupi");
    Tensor<float> t({3, 5, 4});
    for (auto& v : t.data()) v = static_cast<float>(rng.next_uniform(-2.0, 2.0));

    const std::string p = temp_path("tensor.gupi");
    gup::write_image_tensor(p, t);
    auto back = gup::read_image_tensor<float>(p);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) REQUIRE(back.data()[i] == t.data()[i]);

    REQUIRE_THROWS_AS(gup::read_image_tensor<double>(p), gup::IoError);

    {
        std::FILE* f = std::fopen(p.c_str(), "r+b");
        std::fputs("XXXX", f);
        std::fclose(f);
    }
    REQUIRE_THROWS_AS(gup::read_image_tensor<float>(p), gup::IoError);
}

TEST_CASE("a box at target shape with unit scale crops by pure translation") {
    SplitMix64 rng(613, "data.crop1");
    Tensor<float> image({3, 64, 96});
    for (auto& v : image.data()) v = static_cast<float>(rng.next_uniform(0.0, 1.0));

    // With padding 1.25, a box of size (tw/1.25, th/1.25) centered anywhere
    // expands to exactly (tw, th), so the resampling is a translation.
    const std::size_t th = 32, tw = 24;
    const double bw = tw / 1.25, bh = th / 1.25;
    const double cx = 40.0, cy = 30.0;
    auto crop = gup::crop_to_input(image, {cx - bw / 2.0, cy - bh / 2.0, bw, bh}, th, tw);

    REQUIRE((crop.patch.shape() == gup::Shape{3, th, tw}));
    REQUIRE_THAT(crop.to_original.scale_x, Catch::Matchers::WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(crop.to_original.scale_y, Catch::Matchers::WithinAbs(1.0, 1e-12));

    const double x0 = cx - tw / 2.0, y0 = cy - th / 2.0;
    REQUIRE_THAT(crop.to_original.offset_x, Catch::Matchers::WithinAbs(x0, 1e-9));
    REQUIRE_THAT(crop.to_original.offset_y, Catch::Matchers::WithinAbs(y0, 1e-9));

    // Integer-aligned unit-scale sampling reproduces the source pixels.
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < th; ++i)
            for (std::size_t j = 0; j < tw; ++j) {
                const std::size_t sy = static_cast<std::size_t>(y0) + i;
                const std::size_t sx = static_cast<std::size_t>(x0) + j;
                REQUIRE_THAT(crop.patch.at(c, i, j),
                             Catch::Matchers::WithinAbs(image.at(c, sy, sx), 1e-6));
            }
}

TEST_CASE("a double-size box crops at scale two") {
    Tensor<float> image({3, 128, 128});
    const std::size_t th = 32, tw = 32;
    const double bw = 2.0 * tw / 1.25, bh = 2.0 * th / 1.25;
    auto crop = gup::crop_to_input(image, {30.0, 20.0, bw, bh}, th, tw);
    REQUIRE_THAT(crop.to_original.scale_x, Catch::Matchers::WithinAbs(2.0, 1e-12));
    REQUIRE_THAT(crop.to_original.scale_y, Catch::Matchers::WithinAbs(2.0, 1e-12));
    auto inv = crop.to_original.inverted();
    REQUIRE_THAT(inv.scale_x, Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("crop transforms invert to identity") {
    SplitMix64 rng(614, "data.inv");
    Tensor<float> image({3, 200, 160});
    for (int trial = 0; trial < 10; ++trial) {
        const double bx = rng.next_uniform(0.0, 80.0);
        const double by = rng.next_uniform(0.0, 100.0);
        const double bw = rng.next_uniform(10.0, 70.0);
        const double bh = rng.next_uniform(10.0, 90.0);
        auto crop = gup::crop_to_input(image, {bx, by, bw, bh}, 64, 48);
        auto inv = crop.to_original.inverted();
        for (int s = 0; s < 5; ++s) {
            const double x = rng.next_uniform(0.0, 160.0);
            const double y = rng.next_uniform(0.0, 200.0);
            double rx = x, ry = y;
            inv.apply(rx, ry);
            crop.to_original.apply(rx, ry);
            REQUIRE_THAT(rx, Catch::Matchers::WithinAbs(x, 1e-4));
            REQUIRE_THAT(ry, Catch::Matchers::WithinAbs(y, 1e-4));
        }
    }
}

TEST_CASE("keypoints survive crop, encode, decode, and mapping back") {
    SplitMix64 rng(615, "data.pipeline");
    Tensor<float> image({3, 240, 200});

    std::size_t cases = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        const double bw = rng.next_uniform(60.0, 120.0);
        const double bh = rng.next_uniform(80.0, 160.0);
        const double bx = rng.next_uniform(0.0, 200.0 - bw);
        const double by = rng.next_uniform(0.0, 240.0 - bh);
        auto crop = gup::crop_to_input(image, {bx, by, bw, bh}, 256, 192);
        auto to_crop = crop.to_original.inverted();

        // A joint near the box center stays well inside the heatmap.
        gup::KeypointSet kps;
        const double gx = bx + bw * rng.next_uniform(0.35, 0.65);
        const double gy = by + bh * rng.next_uniform(0.35, 0.65);
        kps.joints.push_back({to_crop.apply(Keypoint{gx, gy, 2}).x,
                              to_crop.apply(Keypoint{gx, gy, 2}).y, 2});

        auto heatmap = gup::encode_gaussian<float>(kps, 64, 48, 2.0, 4.0);
        auto decoded = gup::decode_keypoints(heatmap, 4.0);
        auto restored = crop.to_original.apply(Keypoint{decoded[0].x, decoded[0].y, 2});

        const double err = std::hypot(restored.x - gx, restored.y - gy);
        // The crop scale is at most about 0.8 original pixels per crop pixel,
        // so half a heatmap cell stays within 1.6 original pixels.
        const double scale = std::max(crop.to_original.scale_x, crop.to_original.scale_y);
        REQUIRE(err <= 0.6 * 4.0 * scale);
        worst = std::max(worst, err / scale);
        ++cases;
    }
    REQUIRE(cases == 25);
    REQUIRE(worst <= 0.6 * 4.0);
}

TEST_CASE("synthetic dataset generation is deterministic") {
    gup::SyntheticSpec spec;
    spec.count = 6;
    spec.joints = 4;
    spec.image_h = 64;
    spec.image_w = 64;
    spec.seed = 99;

    auto a = gup::generate_synthetic(spec);
    auto b = gup::generate_synthetic(spec);
    REQUIRE(a.size() == 6);
    REQUIRE(b.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t e = 0; e < a[i].image.numel(); ++e)
            REQUIRE(a[i].image.data()[e] == b[i].image.data()[e]);
        for (std::size_t j = 0; j < 4; ++j) {
            REQUIRE(a[i].keypoints.joints[j].x == b[i].keypoints.joints[j].x);
            REQUIRE(a[i].keypoints.joints[j].y == b[i].keypoints.joints[j].y);
        }
    }

    gup::SyntheticSpec other = spec;
    other.seed = 100;
    auto c = gup::generate_synthetic(other);
    bool any_diff = false;
    for (std::size_t e = 0; e < a[0].image.numel() && !any_diff; ++e)
        if (a[0].image.data()[e] != c[0].image.data()[e]) any_diff = true;
    REQUIRE(any_diff);
}

TEST_CASE("synthetic blobs stay clear of the image border") {
    gup::SyntheticSpec spec;
    spec.count = 16;
    spec.joints = 4;
    spec.image_h = 128;
    spec.image_w = 96;
    spec.seed = 7;

    const double margin = std::max(spec.blob_radius, 14.0);
    for (const auto& sample : gup::generate_synthetic(spec)) {
        REQUIRE((sample.image.shape() == gup::Shape{3, 128, 96}));
        REQUIRE(sample.keypoints.joints.size() == 4);
        for (const auto& kp : sample.keypoints.joints) {
            REQUIRE(kp.x >= margin);
            REQUIRE(kp.x <= 96.0 - 1.0 - margin + 1e-9);
            REQUIRE(kp.y >= margin);
            REQUIRE(kp.y <= 128.0 - 1.0 - margin + 1e-9);
            REQUIRE(kp.v == 2);
        }
        REQUIRE(sample.record.area == 128.0 * 96.0);
    }
}
