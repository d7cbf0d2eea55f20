#include "doctest.h"
#include "test_util.hpp"
#include "vsr/error.hpp"
#include "vsr/frontend.hpp"

using namespace vsr;
using vsr::testing::random_tensor;

namespace {

FrontendConfig small_config(std::vector<std::size_t> channels) {
    FrontendConfig c;
    c.num_blocks = channels.size();
    c.block_channels = std::move(channels);
    return c;
}

ParamMap init(const FrontendConfig& c, std::uint64_t seed, double noise = 0.0) {
    ParamMap p;
    Rng rng(seed);
    init_frontend(p, c, rng);
    if (noise > 0.0) vsr::testing::perturb_params(p, rng, noise);
    return p;
}

bool frames_equal(const Tensor& y, std::size_t a, std::size_t b) {
    const std::size_t d = y.dim(1);
    for (std::size_t k = 0; k < d; ++k)
        if (!same_bits(y[a * d + k], y[b * d + k])) return false;
    return true;
}

}  // namespace

TEST_CASE("spatial trajectory") {
    const FrontendConfig c;
    CHECK(c.spatial_trajectory(112) == std::vector<std::size_t>{112, 56, 28, 14, 7, 3});
    CHECK(c.spatial_trajectory(48) == std::vector<std::size_t>{48, 24, 12, 6, 3, 1});
    try {
        c.spatial_trajectory(16);
        FAIL("expected error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("block 4") != std::string::npos);
    }
    FrontendConfig bad;
    bad.num_blocks = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("default frontend output shape at N=48") {
    const FrontendConfig c;
    const ParamMap p = init(c, 1);
    Rng rng(2);
    const Tensor y = frontend_forward(p, c, random_tensor({1, 2, 48, 48}, rng, 0.0, 1.0));
    CHECK(y.shape() == Shape{2, 256});
    CHECK(y.all_finite());
}

TEST_CASE("five-block frontend at N=112 keeps time and ends in the last block's width") {
    const FrontendConfig c = small_config({2, 2, 3, 3, 5});
    const ParamMap p = init(c, 3);
    Rng rng(4);
    const Tensor y = frontend_forward(p, c, random_tensor({1, 3, 112, 112}, rng, 0.0, 1.0));
    CHECK(y.shape() == Shape{3, 5});
}

TEST_CASE("time length is preserved") {
    const FrontendConfig c = small_config({3, 4});
    const ParamMap p = init(c, 5, 0.1);
    Rng rng(6);
    for (std::size_t t : {1u, 2u, 5u, 9u}) {
        const Tensor y = frontend_forward(p, c, random_tensor({1, t, 8, 8}, rng));
        CHECK(y.shape() == Shape{t, 4});
    }
}

TEST_CASE("all-zero input gives a time-constant sequence") {
    SUBCASE("default initialization: every frame identical") {
        const FrontendConfig c = small_config({4, 8, 8});
        const ParamMap p = init(c, 7);
        const std::size_t t = 9;
        const Tensor y = frontend_forward(p, c, Tensor({1, t, 16, 16}));
        for (std::size_t f = 2; f + 2 <= t - 1; ++f) CHECK(frames_equal(y, 2, f));
    }
    SUBCASE("perturbed parameters: interior frames identical") {
        const FrontendConfig c = small_config({4, 8, 8});
        const ParamMap p = init(c, 8, 0.2);
        const std::size_t t = 2 * c.boundary_frames() + 4;
        const Tensor y = frontend_forward(p, c, Tensor({1, t, 16, 16}));
        const std::size_t b = c.boundary_frames();
        for (std::size_t f = b; f + b < t; ++f) CHECK(frames_equal(y, b, f));
        CHECK_FALSE(frames_equal(y, 0, b));
    }
}

TEST_CASE("receptive shift check") {
    const FrontendConfig c = small_config({4, 4, 8});
    const ParamMap p = init(c, 9, 0.1);
    Rng rng(10);
    const Tensor video = random_tensor({1, 20, 16, 16}, rng, 0.0, 1.0);
    CHECK(frontend_receptive_shift_check(p, c, video, 0));
    CHECK(frontend_receptive_shift_check(p, c, video, 2));
    CHECK(frontend_receptive_shift_check(p, c, video, 5));
    const Tensor short_video = random_tensor({1, 2 * c.boundary_frames(), 16, 16}, rng);
    CHECK_THROWS_AS(frontend_receptive_shift_check(p, c, short_video, 0), UsageError);
}

TEST_CASE("frontend rejects mismatched input") {
    const FrontendConfig c = small_config({2, 2});
    const ParamMap p = init(c, 11);
    CHECK_THROWS_AS(frontend_forward(p, c, Tensor({2, 3, 8, 8})), DimensionError);
    CHECK_THROWS_AS(frontend_forward(p, c, Tensor({1, 3, 8, 6})), DimensionError);
    CHECK_THROWS_AS(frontend_forward(p, c, Tensor({1, 3, 2, 2})), ConfigError);
}

TEST_CASE("frontend is deterministic") {
    const FrontendConfig c = small_config({3, 3});
    const ParamMap p = init(c, 14, 0.1);
    Rng rng(15);
    const Tensor v = random_tensor({1, 4, 8, 8}, rng);
    CHECK(bitwise_equal(frontend_forward(p, c, v), frontend_forward(p, c, v)));
}
