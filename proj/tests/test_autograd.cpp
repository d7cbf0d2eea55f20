#include "doctest.h"
#include "test_util.hpp"
#include "vsr/autograd.hpp"
#include "vsr/error.hpp"

using namespace vsr;
using vsr::testing::grad_check;
using vsr::testing::random_tensor;

namespace {

constexpr double kTol = 1e-3;

// Values bounded away from 0 so that ReLU kinks are never straddled by the probe.
Tensor away_from_zero(Shape s, Rng& rng) {
    Tensor t = random_tensor(std::move(s), rng, 0.05, 1.0);
    for (auto& v : t.data()) v = rng.bernoulli(0.5) ? v : -v;
    return t;
}

}  // namespace

TEST_CASE("gradient of sum is all ones") {
    Rng rng(1);
    ad::Var x = ad::parameter(random_tensor({3, 4}, rng));
    ad::Var p = ad::parameter(random_tensor({2}, rng));
    const ad::Var loss = ad::sum(x);
    const std::vector<ad::Var> params{x, p};
    const auto grads = ad::gradients(loss, params);
    for (real g : grads[0].data()) CHECK(g == 1.0f);
    for (real g : grads[1].data()) CHECK(g == 0.0f);
}

TEST_CASE("backward rejects a non-scalar loss") {
    Rng rng(2);
    ad::Var x = ad::parameter(random_tensor({3}, rng));
    CHECK_THROWS_AS(ad::backward(ad::relu(x)), UsageError);
}

TEST_CASE("gradients accumulate across shared uses") {
    ad::Var x = ad::parameter(Tensor({2}, {1.5f, -2.0f}));
    const ad::Var loss = ad::sum(ad::add(ad::mul(x, x), x));
    ad::backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    CHECK(x.grad()[1] == doctest::Approx(-3.0));
}

TEST_CASE("inference graphs keep no history") {
    ad::Var c = ad::constant(Tensor({2}, 1.0f));
    const ad::Var y = ad::relu(ad::scale(c, 2.0f));
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->inputs.empty());
}

TEST_CASE("finite-difference checks for every differentiable op") {
    Rng rng(3);
    using V = std::vector<ad::Var>;

    SUBCASE("elementwise") {
        CHECK(grad_check([](const V& v) { return ad::add(v[0], v[1]); },
                         {random_tensor({8}, rng), random_tensor({8}, rng)}).worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::sub(v[0], v[1]); },
                         {random_tensor({8}, rng), random_tensor({8}, rng)}).worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::mul(v[0], v[1]); },
                         {random_tensor({8}, rng), random_tensor({8}, rng)}).worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::scale(v[0], -1.7f); }, {random_tensor({8}, rng)})
                  .worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::mean(v[0]); }, {random_tensor({3, 5}, rng)}).worst_relative <
              kTol);
    }
    SUBCASE("activations") {
        CHECK(grad_check([](const V& v) { return ad::relu(v[0]); }, {away_from_zero({16}, rng)}).worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::gelu(v[0]); }, {random_tensor({16}, rng, -3, 3)})
                  .worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::swish(v[0]); }, {random_tensor({16}, rng, -3, 3)})
                  .worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::sigmoid(v[0]); }, {random_tensor({16}, rng, -3, 3)})
                  .worst_relative < kTol);
    }
    SUBCASE("linear") {
        CHECK(grad_check([](const V& v) { return ad::linear(v[0], v[1], v[2]); },
                         {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)})
                  .worst_relative < kTol);
    }
    SUBCASE("normalization") {
        CHECK(grad_check([](const V& v) { return ad::layer_norm(v[0], v[1], v[2], 1e-5f); },
                         {random_tensor({3, 8}, rng, -2, 2), random_tensor({8}, rng), random_tensor({8}, rng)})
                  .worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::instance_norm_frame(v[0], v[1], v[2], 1e-5f); },
                         {random_tensor({2, 2, 4, 4}, rng, -2, 2), random_tensor({2}, rng), random_tensor({2}, rng)})
                  .worst_relative < kTol);
    }
    SUBCASE("softmax family") {
        CHECK(grad_check([](const V& v) { return ad::softmax(v[0]); }, {random_tensor({4, 6}, rng, -2, 2)})
                  .worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::log_softmax(v[0]); }, {random_tensor({4, 6}, rng, -2, 2)})
                  .worst_relative < kTol);
    }
    SUBCASE("attention") {
        const AttentionMask causal = AttentionMask::causal(4);
        CHECK(grad_check([](const V& v) { return ad::attention(v[0], v[1], v[2], 2); },
                         {random_tensor({3, 8}, rng), random_tensor({5, 8}, rng), random_tensor({5, 8}, rng)})
                  .worst_relative < kTol);
        CHECK(grad_check([&](const V& v) { return ad::attention(v[0], v[1], v[2], 2, &causal); },
                         {random_tensor({4, 8}, rng), random_tensor({4, 8}, rng), random_tensor({4, 8}, rng)})
                  .worst_relative < kTol);
    }
    SUBCASE("conv3d and pooling") {
        Conv3dParams p;
        p.padding = {1, 1, 1};
        CHECK(grad_check([p](const V& v) { return ad::conv3d(v[0], v[1], v[2], p); },
                         {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 2, 3, 3, 3}, rng), random_tensor({2}, rng)})
                  .worst_relative < kTol);
        Conv3dParams strided;
        strided.stride = {1, 2, 2};
        CHECK(grad_check([strided](const V& v) { return ad::conv3d(v[0], v[1], ad::Var(), strided); },
                         {random_tensor({1, 3, 5, 5}, rng), random_tensor({2, 1, 2, 3, 3}, rng)})
                  .worst_relative < kTol);
        // Distinct, well separated values so the argmax never flips under the probe.
        Tensor pool_in({1, 2, 4, 6});
        for (std::size_t i = 0; i < pool_in.numel(); ++i) pool_in[i] = static_cast<real>((i * 37) % 48) * 0.05f;
        CHECK(grad_check([](const V& v) { return ad::max_pool_spatial(v[0]); }, {pool_in}).worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::avg_pool_spatial(v[0]); }, {random_tensor({2, 3, 4, 4}, rng)})
                  .worst_relative < kTol);
    }
    SUBCASE("sequence ops") {
        CHECK(grad_check([](const V& v) { return ad::depthwise_conv1d_time(v[0], v[1], v[2]); },
                         {random_tensor({5, 3}, rng), random_tensor({3, 3}, rng), random_tensor({3}, rng)})
                  .worst_relative < kTol);
        const std::vector<int> ids{2, 0, 2, 1};
        CHECK(grad_check([&](const V& v) { return ad::embedding(ids, v[0]); }, {random_tensor({3, 4}, rng)})
                  .worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::concat_last(v[0], v[1]); },
                         {random_tensor({3, 2}, rng), random_tensor({3, 4}, rng)}).worst_relative < kTol);
        CHECK(grad_check([](const V& v) { return ad::slice_last(v[0], 1, 3); }, {random_tensor({3, 5}, rng)})
                  .worst_relative < kTol);
    }
}

TEST_CASE("operations are deterministic") {
    Rng rng(4);
    const Tensor x = random_tensor({2, 4, 6, 6}, rng);
    const Tensor k = random_tensor({3, 2, 3, 3, 3}, rng);
    CHECK(bitwise_equal(conv3d(x, k, Tensor()), conv3d(x, k, Tensor())));
}
