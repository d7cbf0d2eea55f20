// Finite-difference checks of composed models, built with double elements so
// that float32 rounding does not mask the comparison.

#include "doctest.h"
#include "test_util.hpp"
#include "vsr/encoder.hpp"
#include "vsr/decoder.hpp"
#include "vsr/frontend.hpp"
#include "vsr/model.hpp"

using namespace vsr;
using vsr::testing::grad_check_params;
using vsr::testing::random_tensor;

namespace {

constexpr double kStep = 1e-5;
constexpr double kTolerance = 1e-3;

}  // namespace

TEST_CASE("frontend gradient (1x6x8x8 input, 2 blocks)") {
    FrontendConfig c;
    c.num_blocks = 2;
    c.block_channels = {2, 3};
    ParamMap p;
    Rng rng(12);
    init_frontend(p, c, rng);
    vsr::testing::perturb_params(p, rng, 0.1);
    p["input"] = random_tensor({1, 6, 8, 8}, rng, 0.0, 1.0);
    const auto report =
        grad_check_params([&](const ParamView& v) { return frontend_forward(v, c, v("input")); }, p, 7, kStep);
    CHECK(report.worst_relative < kTolerance);
}

TEST_CASE("encoder gradient (2 layers, d_model=8) for every variant") {
    for (EncoderVariant v : {EncoderVariant::conformer, EncoderVariant::branchformer, EncoderVariant::e_branchformer}) {
        CAPTURE(to_string(v));
        EncoderConfig c;
        c.variant = v;
        c.input_dim = 6;
        c.layers = 2;
        c.d_model = 8;
        c.heads = 2;
        c.ffn_dim = 16;
        c.cgmlp_expansion = 2;
        c.kernel = 3;
        c.merge_kernel = 3;
        ParamMap p;
        Rng rng(21);
        init_encoder(p, c, rng);
        vsr::testing::perturb_params(p, rng, 0.1);
        p["input"] = random_tensor({5, 6}, rng);
        const auto report =
            grad_check_params([&](const ParamView& pv) { return encoder_forward(pv, c, pv("input")); }, p, 7, kStep);
        CHECK(report.worst_relative < kTolerance);
    }
}

TEST_CASE("decoder gradient (2 layers, d_model=8, V=6) including the memory") {
    DecoderConfig c;
    c.layers = 2;
    c.d_model = 8;
    c.heads = 2;
    c.ffn_dim = 16;
    ParamMap p;
    Rng rng(31);
    init_decoder(p, c, 6, rng);
    vsr::testing::perturb_params(p, rng, 0.1);
    p["memory"] = random_tensor({4, 8}, rng);
    const std::vector<int> tokens{5, 1, 3, 1};
    const auto report = grad_check_params(
        [&](const ParamView& pv) { return decoder_forward(pv, c, tokens, pv("memory")); }, p, 7, kStep);
    CHECK(report.worst_relative < kTolerance);
}

TEST_CASE("LM gradient (2 layers, d_model=8, V=5), tied and untied") {
    for (bool tied : {true, false}) {
        CAPTURE(tied);
        LmConfig c;
        c.layers = 2;
        c.d_model = 8;
        c.heads = 2;
        c.ffn_dim = 16;
        c.tie_embeddings = tied;
        ParamMap p;
        Rng rng(41);
        init_lm(p, c, 5, rng);
        vsr::testing::perturb_params(p, rng, 0.1);
        const std::vector<int> tokens{4, 0, 1, 0, 2};
        const auto report =
            grad_check_params([&](const ParamView& pv) { return lm_forward(pv, c, tokens); }, p, 7, kStep);
        CHECK(report.worst_relative < kTolerance);
    }
}

TEST_CASE("composed model gradient (2-block frontend, 2-layer encoder, 2-layer decoder, d_model=8)") {
    ModelConfig c = ModelConfig::toy(Vocabulary::from_characters({"a", "b", "c"}), 8, 8);
    c.frontend.num_blocks = 2;
    c.frontend.block_channels = {2, 3};
    c.encoder.input_dim = c.frontend.output_dim();
    c.encoder.heads = 2;
    c.encoder.kernel = 3;
    c.encoder.merge_kernel = 3;
    c.decoder.heads = 2;
    c.use_lm = false;
    CHECK(c.encoder.layers == 2);
    CHECK(c.decoder.layers == 2);
    Rng rng(51);
    ParamMap p = init_model(c, rng);
    vsr::testing::perturb_params(p, rng, 0.05);
    const Tensor input = random_tensor({c.frontend.input_channels, 6, 8, 8}, rng, 0.0, 1.0);
    const std::vector<int> transcript{1, 2, 1};
    JointLossConfig loss;
    const auto report = grad_check_params(
        [&](const ParamView& pv) { return joint_loss(pv, c, input, transcript, loss).joint; }, p, 7, kStep, 256);
    CHECK(report.worst_relative < kTolerance);
}
