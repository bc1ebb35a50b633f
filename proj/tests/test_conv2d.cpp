// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "gup/conv.hpp"
#include "oracle_helpers.hpp"

using gup::Conv2dSpec;
using gup::Tensor;

TEST_CASE("conv2d of all-ones 3x3 with all-ones kernel sums to 9") {
    Tensor<float> x = Tensor<float>::full({1, 1, 3, 3}, 1.f);
    Tensor<float> w = Tensor<float>::full({1, 1, 3, 3}, 1.f);
    Tensor<float> out = gup::conv2d(x, w, Tensor<float>(), Conv2dSpec{1, 0, 1, 1});
    REQUIRE(out.shape() == gup::Shape{1, 1, 1, 1});
    CHECK(out.at(0) == 9.f);
}

TEST_CASE("1x1 identity kernel reproduces the input") {
    gup::SplitMix64 rng(11);
    Tensor<float> x = oracle::random_tensor<float>({2, 3, 4, 5}, rng);
    Tensor<float> w({3, 3, 1, 1});
    for (std::size_t oc = 0; oc < 3; ++oc) w.at(oc, oc, 0, 0) = 1.f;
    Tensor<float> out = gup::conv2d(x, w, Tensor<float>(), Conv2dSpec{});
    CHECK(oracle::max_abs_diff(out, x) == 0.0);
}

TEST_CASE("conv2d matches the naive seven-loop oracle on the reference case") {
    gup::SplitMix64 rng(21);
    Tensor<float> x = oracle::random_tensor<float>({2, 4, 8, 8}, rng);
    Tensor<float> w = oracle::random_tensor<float>({6, 4, 3, 3}, rng);
    Tensor<float> b = oracle::random_tensor<float>({6}, rng);
    const Conv2dSpec spec{1, 1, 1, 1};
    Tensor<float> got = gup::conv2d(x, w, b, spec);
    Tensor<float> want = oracle::conv2d_naive(x, w, b, spec);
    REQUIRE(got.shape() == want.shape());
    CHECK(oracle::max_rel_diff(got, want) <= 1e-6);
}

TEST_CASE("conv2d matches the oracle across strides, dilations and groups") {
    gup::SplitMix64 rng(31);
    int cases = 0;
    for (std::size_t stride : {std::size_t(1), std::size_t(2)})
        for (std::size_t dilation : {std::size_t(1), std::size_t(2), std::size_t(3)})
            for (bool depthwise : {false, true}) {
                const std::size_t cin = 4;
                const std::size_t groups = depthwise ? cin : 1;
                const std::size_t cout = depthwise ? cin : 6;
                const std::size_t k = 3;
                const std::size_t pad = dilation;  // keeps the kernel inside small inputs
                Tensor<float> x = oracle::random_tensor<float>({2, cin, 9, 8}, rng);
                Tensor<float> w = oracle::random_tensor<float>({cout, cin / groups, k, k}, rng);
                Tensor<float> b = oracle::random_tensor<float>({cout}, rng);
                const Conv2dSpec spec{stride, pad, dilation, groups};
                Tensor<float> got = gup::conv2d(x, w, b, spec);
                Tensor<float> want = oracle::conv2d_naive(x, w, b, spec);
                REQUIRE(got.shape() == want.shape());
                INFO("stride=" << stride << " dilation=" << dilation << " groups=" << groups);
                CHECK(oracle::max_rel_diff(got, want) <= 1e-6);
                ++cases;
            }
    CHECK(cases == 12);
}

TEST_CASE("conv2d output shape follows the padded formula") {
    Tensor<float> x({1, 1, 10, 7});
    Tensor<float> w({2, 1, 3, 3});
    Tensor<float> out = gup::conv2d(x, w, Tensor<float>(), Conv2dSpec{2, 1, 2, 1});
    // H: (10 + 2 - (2*2+1)) / 2 + 1 = 4 ; W: (7 + 2 - 5) / 2 + 1 = 3.
    CHECK(out.shape() == gup::Shape{1, 2, 4, 3});
}

TEST_CASE("conv2d rejects invalid specs and shapes") {
    Tensor<float> x({1, 4, 6, 6});
    Tensor<float> w_badgroup({6, 3, 3, 3});
    CHECK_THROWS_AS(gup::conv2d(x, w_badgroup, Tensor<float>(), Conv2dSpec{1, 1, 1, 2}), gup::ShapeError);

    Tensor<float> w({2, 4, 9, 9});
    CHECK_THROWS_AS(gup::conv2d(x, w, Tensor<float>(), Conv2dSpec{1, 0, 1, 1}), gup::SpecError);

    Tensor<float> w_ok({2, 4, 3, 3});
    Tensor<float> bad_bias({3});
    CHECK_THROWS_AS(gup::conv2d(x, w_ok, bad_bias, Conv2dSpec{1, 1, 1, 1}), gup::ShapeError);

    CHECK_THROWS_AS(gup::conv2d(x, w_ok, Tensor<float>(), Conv2dSpec{0, 1, 1, 1}), gup::SpecError);
}

TEST_CASE("conv2d is bit-deterministic across repeat runs") {
    gup::SplitMix64 rng(41);
    Tensor<float> x = oracle::random_tensor<float>({2, 3, 12, 10}, rng);
    Tensor<float> w = oracle::random_tensor<float>({5, 3, 3, 3}, rng);
    Tensor<float> a = gup::conv2d(x, w, Tensor<float>(), Conv2dSpec{1, 1, 1, 1});
    Tensor<float> bt = gup::conv2d(x, w, Tensor<float>(), Conv2dSpec{1, 1, 1, 1});
    for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a.data()[i] == bt.data()[i]);
}

TEST_CASE("conv2d is bit-deterministic for any thread count") {
    gup::SplitMix64 rng(43);
    // Big enough to clear the parallel-dispatch threshold.
    Tensor<float> x = oracle::random_tensor<float>({1, 16, 32, 32}, rng);
    Tensor<float> w = oracle::random_tensor<float>({32, 16, 3, 3}, rng);
    gup::set_thread_count(1);
    Tensor<float> serial = gup::conv2d(x, w, Tensor<float>(), Conv2dSpec{1, 1, 1, 1});
    gup::set_thread_count(4);
    Tensor<float> parallel = gup::conv2d(x, w, Tensor<float>(), Conv2dSpec{1, 1, 1, 1});
    gup::set_thread_count(1);
    for (std::size_t i = 0; i < serial.numel(); ++i) REQUIRE(serial.data()[i] == parallel.data()[i]);
}
