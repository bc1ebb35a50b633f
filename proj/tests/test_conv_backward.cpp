// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "gup/conv.hpp"
#include "gup/ops.hpp"
#include "oracle_helpers.hpp"

using gup::Conv2dSpec;
using gup::Tensor;

TEST_CASE("grad_input of a constant-weight conv under sum-loss is the kernel sum at interior pixels") {
    Tensor<double> x = Tensor<double>::full({1, 1, 5, 5}, 0.3);
    x.set_requires_grad(true);
    Tensor<double> w = Tensor<double>::full({1, 1, 3, 3}, 2.0);
    Tensor<double> loss = gup::sum_all(gup::conv2d(x, w, Tensor<double>(), Conv2dSpec{1, 1, 1, 1}));
    loss.backward();
    // Interior input pixels feed all 9 kernel taps.
    CHECK(x.grad()[2 * 5 + 2] == Catch::Approx(18.0));
    // The corner feeds only the 2x2 sub-block.
    CHECK(x.grad()[0] == Catch::Approx(8.0));
}

TEST_CASE("zero grad_out produces zero gradients") {
    gup::SplitMix64 rng(5);
    Tensor<double> x = oracle::random_tensor<double>({1, 2, 5, 5}, rng);
    Tensor<double> w = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
    const Conv2dSpec spec{1, 1, 1, 1};
    Tensor<double> gout({1, 3, 5, 5});
    auto grads = gup::conv2d_backward(gout, x, w, spec, true);
    CHECK(oracle::max_abs_diff(grads.grad_input, Tensor<double>({1, 2, 5, 5})) == 0.0);
    CHECK(oracle::max_abs_diff(grads.grad_weight, Tensor<double>({3, 2, 3, 3})) == 0.0);
    CHECK(oracle::max_abs_diff(grads.grad_bias, Tensor<double>({3})) == 0.0);
}

TEST_CASE("conv2d gradients match central finite differences over randomized specs") {
    double worst = 0.0;
    std::size_t checked = 0;
    int cases = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        gup::SplitMix64 rng(900 + seed);
        const std::size_t stride = 1 + rng.next_below(2);
        const std::size_t dilation = 1 + rng.next_below(2);
        const bool depthwise = rng.next_below(2) == 1;
        const std::size_t cin = 2 + rng.next_below(2);
        const std::size_t groups = depthwise ? cin : 1;
        const std::size_t cout = depthwise ? cin : 3;
        const Conv2dSpec spec{stride, dilation, dilation, groups};
        Tensor<double> x = oracle::random_tensor<double>({1, cin, 6, 5}, rng);
        Tensor<double> w = oracle::random_tensor<double>({cout, cin / groups, 3, 3}, rng);
        Tensor<double> b = oracle::random_tensor<double>({cout}, rng);
        auto rep = oracle::fd_check(
            [&] { return oracle::weighted_sum(gup::conv2d(x, w, b, spec), 1234 + seed); }, {x, w, b});
        worst = std::max(worst, rep.max_rel);
        checked += rep.checked;
        ++cases;
    }
    INFO("worst relative error " << worst << " over " << checked << " coordinates");
    CHECK(cases == 20);
    CHECK(worst <= 1e-3);
}

TEST_CASE("standalone conv2d_backward agrees with tape gradients") {
    gup::SplitMix64 rng(77);
    Tensor<double> x = oracle::random_tensor<double>({2, 3, 6, 6}, rng);
    Tensor<double> w = oracle::random_tensor<double>({4, 3, 3, 3}, rng);
    Tensor<double> b = oracle::random_tensor<double>({4}, rng);
    const Conv2dSpec spec{1, 1, 1, 1};

    x.set_requires_grad(true);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    Tensor<double> out = gup::conv2d(x, w, b, spec);
    gup::sum_all(out).backward();

    Tensor<double> gout = Tensor<double>::full(out.shape(), 1.0);
    auto grads = gup::conv2d_backward(gout, x, w, spec, true);
    CHECK(oracle::max_abs_diff(grads.grad_input, Tensor<double>::from_vector(x.shape(), x.grad())) <= 1e-12);
    CHECK(oracle::max_abs_diff(grads.grad_weight, Tensor<double>::from_vector(w.shape(), w.grad())) <= 1e-12);
    CHECK(oracle::max_abs_diff(grads.grad_bias, Tensor<double>::from_vector(b.shape(), b.grad())) <= 1e-12);
}

TEST_CASE("transposed_conv2d broadcasts disjoint 2x2 tiles for stride-2 2x2 kernels") {
    Tensor<float> x = Tensor<float>::from_vector({1, 1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    Tensor<float> w = Tensor<float>::full({1, 1, 2, 2}, 1.f);
    Tensor<float> out = gup::transposed_conv2d(x, w, Tensor<float>(), Conv2dSpec{2, 0, 1, 1});
    REQUIRE(out.shape() == gup::Shape{1, 1, 4, 4});
    const std::vector<float> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(out.data()[i] == want[i]);
}

TEST_CASE("transposed_conv2d matches the scatter-form oracle") {
    gup::SplitMix64 rng(55);
    for (std::size_t stride : {std::size_t(1), std::size_t(2)}) {
        // 64-bit so gather-vs-scatter accumulation order cannot blur the check.
        Tensor<double> x = oracle::random_tensor<double>({2, 3, 5, 4}, rng);
        Tensor<double> w = oracle::random_tensor<double>({3, 4, 3, 3}, rng);
        Tensor<double> b = oracle::random_tensor<double>({4}, rng);
        const Conv2dSpec spec{stride, 1, 1, 1};
        Tensor<double> got = gup::transposed_conv2d(x, w, b, spec);
        Tensor<double> want = oracle::transposed_conv2d_naive(x, w, b, spec);
        REQUIRE(got.shape() == want.shape());
        CHECK(oracle::max_rel_diff(got, want) <= 1e-12);
    }
}

TEST_CASE("decoder sizing: stride-2 4x4 kernel with pad 1 doubles 32x24 to 64x48") {
    Tensor<float> x({1, 8, 32, 24});
    Tensor<float> w({8, 8, 4, 4});
    Tensor<float> out = gup::transposed_conv2d(x, w, Tensor<float>(), Conv2dSpec{2, 1, 1, 1});
    CHECK(out.shape() == gup::Shape{1, 8, 64, 48});
}

TEST_CASE("transposed_conv2d is the adjoint of conv2d") {
    gup::SplitMix64 rng(66);
    for (int c = 0; c < 10; ++c) {
        const std::size_t stride = 1 + rng.next_below(2);
        const Conv2dSpec spec{stride, 1, 1, 1};
        // 7x7 with k=3, pad 1 tiles exactly under both strides, so the
        // adjoint maps back onto the original input shape.
        Tensor<double> x = oracle::random_tensor<double>({1, 3, 7, 7}, rng);
        Tensor<double> w = oracle::random_tensor<double>({5, 3, 3, 3}, rng);
        Tensor<double> cx = gup::conv2d(x, w, Tensor<double>(), spec);
        Tensor<double> y = oracle::random_tensor<double>(cx.shape(), rng);
        Tensor<double> ty = gup::transposed_conv2d(y, w, Tensor<double>(), spec);
        REQUIRE(ty.shape() == x.shape());

        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx.data()[i] * y.data()[i];
        for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.data()[i] * ty.data()[i];
        CHECK(std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-4}) <= 1e-5);
    }
}

TEST_CASE("transposed_conv2d gradients match central finite differences") {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        gup::SplitMix64 rng(700 + seed);
        const std::size_t stride = 1 + rng.next_below(2);
        const std::size_t pad = rng.next_below(2);
        const Conv2dSpec spec{stride, pad, 1, 1};
        Tensor<double> x = oracle::random_tensor<double>({1, 2, 4, 5}, rng);
        Tensor<double> w = oracle::random_tensor<double>({2, 3, 3, 3}, rng);
        Tensor<double> b = oracle::random_tensor<double>({3}, rng);
        auto rep = oracle::fd_check(
            [&] { return oracle::weighted_sum(gup::transposed_conv2d(x, w, b, spec), 4321 + seed); }, {x, w, b});
        worst = std::max(worst, rep.max_rel);
    }
    CHECK(worst <= 1e-3);
}
