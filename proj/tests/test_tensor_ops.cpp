#include <cmath>
#include <numeric>

#include "doctest.h"
#include "test_util.hpp"
#include "vsr/error.hpp"
#include "vsr/ops.hpp"

using namespace vsr;
using vsr::testing::random_tensor;

TEST_CASE("conv3d identity kernel returns the input") {
    Rng rng(1);
    const Tensor x = random_tensor({1, 3, 4, 5}, rng);
    const Tensor k({1, 1, 1, 1, 1}, 1.0f);
    const Tensor b({1}, 0.0f);
    CHECK(bitwise_equal(conv3d(x, k, b), x));
}

TEST_CASE("conv3d all-ones 2x2x2 kernel sums 1..8") {
    std::vector<real> vals(8);
    std::iota(vals.begin(), vals.end(), 1.0f);
    const Tensor x({1, 2, 2, 2}, vals);
    const Tensor y = conv3d(x, Tensor({1, 1, 2, 2, 2}, 1.0f), Tensor());
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 36.0f);
}

TEST_CASE("conv3d matches the loop-nest oracle exactly") {
    Rng rng(2);
    SUBCASE("3x3x3 kernel, no padding") {
        const Tensor x = random_tensor({1, 4, 6, 6}, rng);
        const Tensor k = random_tensor({1, 1, 3, 3, 3}, rng);
        const Tensor b = random_tensor({1}, rng);
        CHECK(bitwise_equal(conv3d(x, k, b), testing::conv3d_oracle(x, k, b, 1, 0)));
    }
    SUBCASE("multi-channel, padded") {
        const Tensor x = random_tensor({3, 5, 7, 6}, rng);
        const Tensor k = random_tensor({4, 3, 3, 3, 3}, rng);
        const Tensor b = random_tensor({4}, rng);
        Conv3dParams p;
        p.padding = {1, 1, 1};
        CHECK(bitwise_equal(conv3d(x, k, b, p), testing::conv3d_oracle(x, k, b, 1, 1)));
    }
    SUBCASE("strided and padded") {
        const Tensor x = random_tensor({2, 6, 9, 8}, rng);
        const Tensor k = random_tensor({2, 2, 3, 3, 3}, rng);
        Conv3dParams p;
        p.padding = {1, 1, 1};
        p.stride = {2, 2, 2};
        CHECK(bitwise_equal(conv3d(x, k, Tensor(), p), testing::conv3d_oracle(x, k, Tensor(), 2, 1)));
    }
}

TEST_CASE("conv3d output size follows the floor formula") {
    Rng rng(3);
    Conv3dParams p;
    p.padding = {1, 0, 2};
    p.stride = {1, 2, 3};
    const Tensor y = conv3d(random_tensor({1, 5, 9, 10}, rng), random_tensor({2, 1, 3, 3, 3}, rng), Tensor(), p);
    CHECK(y.shape() == Shape{2, (5 + 2 - 3) / 1 + 1, (9 - 3) / 2 + 1, (10 + 4 - 3) / 3 + 1});
}

TEST_CASE("conv3d shape errors name the axis") {
    Rng rng(4);
    const Tensor x = random_tensor({1, 2, 6, 6}, rng);
    try {
        conv3d(x, random_tensor({1, 1, 3, 3, 3}, rng), Tensor());
        FAIL("expected dimension error");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("axis T") != std::string::npos);
    }
    CHECK_THROWS_AS(conv3d(x, random_tensor({1, 2, 1, 1, 1}, rng), Tensor()), DimensionError);
    Conv3dParams zero_stride;
    zero_stride.stride = {1, 0, 1};
    CHECK_THROWS_AS(conv3d(x, random_tensor({1, 1, 1, 1, 1}, rng), Tensor(), zero_stride), ConfigError);
}

TEST_CASE("linear examples") {
    const Tensor x({2, 2}, {0.5f, -1.5f, 2.0f, 3.0f});
    SUBCASE("identity weight") {
        CHECK(bitwise_equal(linear(x, Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, 0.0f)), x));
    }
    SUBCASE("zero weight gives bias") {
        const Tensor y = linear(x, Tensor({3, 2}, 0.0f), Tensor({3}, {1.0f, -2.0f, 0.25f}));
        for (std::size_t r = 0; r < 2; ++r) {
            CHECK(y.at({r, 0}) == 1.0f);
            CHECK(y.at({r, 1}) == -2.0f);
            CHECK(y.at({r, 2}) == 0.25f);
        }
    }
    SUBCASE("hand arithmetic") {
        const Tensor y = linear(Tensor({2}, {1, 1}), Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2}, 0.0f));
        CHECK(y[0] == 3.0f);
        CHECK(y[1] == 7.0f);
    }
    SUBCASE("oracle on 3-d input") {
        Rng rng(5);
        const Tensor xi = random_tensor({2, 3, 7}, rng);
        const Tensor w = random_tensor({5, 7}, rng);
        const Tensor b = random_tensor({5}, rng);
        CHECK(bitwise_equal(linear(xi, w, b), testing::linear_oracle(xi, w, b)));
    }
    CHECK_THROWS_AS(linear(x, Tensor({2, 3}, 1.0f), Tensor()), DimensionError);
}

TEST_CASE("layer_norm examples") {
    const Tensor g({4}, 1.0f), b({4}, 0.0f);
    const Tensor y = layer_norm(Tensor({4}, 2.5f), g, b, 1e-5f);
    for (real v : y.data()) CHECK(v == 0.0f);

    const Tensor y2 = layer_norm(Tensor({2}, {-1.0f, 1.0f}), Tensor({2}, 1.0f), Tensor({2}, 0.0f), 1e-12f);
    CHECK(y2[0] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(y2[1] == doctest::Approx(1.0).epsilon(1e-6));

    Rng rng(6);
    const Tensor x = random_tensor({8}, rng, -3.0, 5.0);
    const Tensor y3 = layer_norm(x, Tensor({8}, 1.0f), Tensor({8}, 0.0f), 1e-12f);
    double m = 0.0, v = 0.0;
    for (real e : y3.data()) m += e;
    m /= 8.0;
    for (real e : y3.data()) v += (e - m) * (e - m);
    v /= 8.0;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1.0) < 1e-4);
}

TEST_CASE("softmax examples and invariants") {
    const Tensor u = softmax(Tensor({4}, 0.3f));
    for (real v : u.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-7));

    const Tensor p = softmax(Tensor({2}, {0.0f, static_cast<real>(std::log(3.0))}));
    CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-6));

    Rng rng(7);
    Tensor x = random_tensor({5, 9}, rng, -4.0, 4.0);
    for (auto& v : x.data()) v = std::round(v * 64.0f) / 64.0f;  // grid values shift exactly
    const Tensor y = softmax(x);
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < 9; ++i) s += y.at({r, i});
        CHECK(std::abs(s - 1.0) <= 1e-6);
    }
    // Shift by an exactly representable constant: bitwise identical.
    Tensor shifted = x;
    for (auto& v : shifted.data()) v += 8.0f;
    bool exact = true;
    for (std::size_t i = 0; i < x.numel(); ++i) exact = exact && (x[i] + 8.0f) - 8.0f == x[i];
    REQUIRE(exact);
    CHECK(bitwise_equal(softmax(shifted), y));
}

TEST_CASE("log_softmax rows have zero log-sum-exp") {
    Rng rng(8);
    const Tensor y = log_softmax(random_tensor({3, 6}, rng, -5.0, 5.0));
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < 6; ++i) s += std::exp(static_cast<double>(y.at({r, i})));
        CHECK(std::abs(std::log(s)) < 1e-6);
    }
}

namespace {

AttentionWeights random_attention(std::size_t d, Rng& rng) {
    return {random_tensor({d, d}, rng), random_tensor({d}, rng), random_tensor({d, d}, rng), random_tensor({d}, rng),
            random_tensor({d, d}, rng), random_tensor({d}, rng), random_tensor({d, d}, rng), random_tensor({d}, rng)};
}

}  // namespace

TEST_CASE("multi_head_attention with one position is out_proj(v_proj(x))") {
    Rng rng(9);
    const AttentionWeights w = random_attention(8, rng);
    const Tensor x = random_tensor({1, 8}, rng);
    const Tensor expected = linear(linear(x, w.wv, w.bv), w.wo, w.bo);
    CHECK(bitwise_equal(multi_head_attention(x, x, w, 2), expected));
}

TEST_CASE("multi_head_attention is permutation equivariant without mask") {
    Rng rng(10);
    const AttentionWeights w = random_attention(8, rng);
    const Tensor x = random_tensor({5, 8}, rng);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Tensor xp({5, 8});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t c = 0; c < 8; ++c) xp.at({i, c}) = x.at({perm[i], c});
    const Tensor y = multi_head_attention(x, x, w, 4);
    const Tensor yp = multi_head_attention(xp, xp, w, 4);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t c = 0; c < 8; ++c) CHECK(yp.at({i, c}) == doctest::Approx(y.at({perm[i], c})).epsilon(1e-6));
}

TEST_CASE("attention 2x2 hand-computed case") {
    // Identity projections, one head, D=2, x = I: scores = I / sqrt(2).
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor zero({2}, 0.0f);
    const AttentionWeights w{eye, zero, eye, zero, eye, zero, eye, zero};
    const Tensor y = multi_head_attention(eye, eye, w, 1);
    // softmax([1/sqrt2, 0]) = [e^{0.70710678}/(e^{0.70710678}+1), 1/(...)] = [0.6697615, 0.3302385]
    CHECK(y.at({0, 0}) == doctest::Approx(0.6697615).epsilon(1e-6));
    CHECK(y.at({0, 1}) == doctest::Approx(0.3302385).epsilon(1e-6));
    CHECK(y.at({1, 0}) == doctest::Approx(0.3302385).epsilon(1e-6));
    CHECK(y.at({1, 1}) == doctest::Approx(0.6697615).epsilon(1e-6));
}

TEST_CASE("multi_head_attention matches the straight-line oracle exactly") {
    Rng rng(11);
    const AttentionWeights w = random_attention(8, rng);
    const Tensor xq = random_tensor({4, 8}, rng);
    const Tensor xkv = random_tensor({6, 8}, rng);
    CHECK(bitwise_equal(multi_head_attention(xq, xkv, w, 2),
                        testing::attention_oracle(xq, xkv, w.wq, w.bq, w.wk, w.bk, w.wv, w.bv, w.wo, w.bo, 2)));
    const AttentionMask causal = AttentionMask::causal(4);
    std::vector<std::vector<bool>> allow(4, std::vector<bool>(4));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) allow[i][j] = j <= i;
    CHECK(bitwise_equal(multi_head_attention(xq, xq, w, 4, &causal),
                        testing::attention_oracle(xq, xq, w.wq, w.bq, w.wk, w.bk, w.wv, w.bv, w.wo, w.bo, 4, &allow)));
}

TEST_CASE("attention rejects head counts that do not divide the model dim") {
    Rng rng(12);
    const AttentionWeights w = random_attention(6, rng);
    const Tensor x = random_tensor({2, 6}, rng);
    CHECK_THROWS_AS(multi_head_attention(x, x, w, 4), ConfigError);
}

TEST_CASE("pooling and normalization shapes") {
    Rng rng(13);
    const Tensor x = random_tensor({2, 3, 7, 7}, rng);
    CHECK(max_pool_spatial(x).shape() == Shape{2, 3, 3, 3});
    CHECK(avg_pool_spatial(x).shape() == Shape{3, 2});
    const Tensor n = instance_norm_frame(x, Tensor({2}, 1.0f), Tensor({2}, 0.0f), 1e-5f);
    double m = 0.0;
    for (std::size_t i = 0; i < 49; ++i) m += n[i];
    CHECK(std::abs(m / 49.0) < 1e-6);
    CHECK_THROWS_AS(max_pool_spatial(random_tensor({1, 1, 1, 4}, rng)), DimensionError);
}

TEST_CASE("depthwise conv1d requires odd kernels") {
    Rng rng(14);
    CHECK_THROWS_AS(depthwise_conv1d_time(random_tensor({4, 3}, rng), random_tensor({3, 2}, rng), Tensor({3}, 0.0f)),
                    ConfigError);
    // Centre tap only: identity plus bias.
    Tensor w({3, 3}, 0.0f);
    for (std::size_t c = 0; c < 3; ++c) w.at({c, 1}) = 1.0f;
    const Tensor x = random_tensor({4, 3}, rng);
    CHECK(bitwise_equal(depthwise_conv1d_time(x, w, Tensor({3}, 0.0f)), x));
}
