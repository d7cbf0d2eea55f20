#include <cmath>
#include <numeric>

#include "doctest.h"
#include "test_util.hpp"
#include "vsr/encoder.hpp"
#include "vsr/error.hpp"

using namespace vsr;
using vsr::testing::random_tensor;

namespace {

EncoderConfig toy_config(EncoderVariant v, std::size_t layers = 2, std::size_t d = 16, std::size_t heads = 2) {
    EncoderConfig c;
    c.variant = v;
    c.input_dim = 10;
    c.layers = layers;
    c.d_model = d;
    c.heads = heads;
    c.ffn_dim = 2 * d;
    c.cgmlp_expansion = 2;
    c.kernel = 5;
    c.merge_kernel = 3;
    return c;
}

ParamMap init(const EncoderConfig& c, std::uint64_t seed, double noise = 0.1) {
    ParamMap p;
    Rng rng(seed);
    init_encoder(p, c, rng);
    vsr::testing::perturb_params(p, rng, noise);
    return p;
}

const EncoderVariant kVariants[] = {EncoderVariant::conformer, EncoderVariant::branchformer,
                                    EncoderVariant::e_branchformer};

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
    Tensor y(x.shape());
    const std::size_t d = x.cols();
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t k = 0; k < d; ++k) y[i * d + k] = x[perm[i] * d + k];
    return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

// Straight-line cgMLP in double.
std::vector<double> cgmlp_oracle(const ParamMap& p, const std::string& pre, const Tensor& x) {
    const std::size_t t = x.dim(0), d = x.dim(1);
    const Tensor& wu = p.at(pre + ".up.w");
    const Tensor& bu = p.at(pre + ".up.b");
    const std::size_t e = wu.dim(0), half = e / 2;
    std::vector<double> h(t * e);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < e; ++j) {
            double acc = bu[j];
            for (std::size_t k = 0; k < d; ++k) acc += static_cast<double>(x[i * d + k]) * wu[j * d + k];
            const double c = std::sqrt(2.0 / M_PI);
            h[i * e + j] = 0.5 * acc * (1.0 + std::tanh(c * (acc + 0.044715 * acc * acc * acc)));
        }
    std::vector<double> g(t * half);
    const Tensor& gam = p.at(pre + ".gate_norm.gamma");
    const Tensor& bet = p.at(pre + ".gate_norm.beta");
    for (std::size_t i = 0; i < t; ++i) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < half; ++j) mean += h[i * e + half + j];
        mean /= half;
        for (std::size_t j = 0; j < half; ++j) var += std::pow(h[i * e + half + j] - mean, 2);
        var /= half;
        for (std::size_t j = 0; j < half; ++j)
            g[i * half + j] = (h[i * e + half + j] - mean) / std::sqrt(var + 1e-5) * gam[j] + bet[j];
    }
    const Tensor& wc = p.at(pre + ".gate_conv.w");
    const Tensor& bc = p.at(pre + ".gate_conv.b");
    const std::size_t k = wc.dim(1);
    std::vector<double> gated(t * half);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < half; ++j) {
            double acc = bc[j];
            for (std::size_t q = 0; q < k; ++q) {
                const long src = static_cast<long>(i + q) - static_cast<long>(k / 2);
                if (src >= 0 && src < static_cast<long>(t)) acc += g[src * half + j] * wc[j * k + q];
            }
            gated[i * half + j] = h[i * e + j] * acc;
        }
    const Tensor& wd = p.at(pre + ".down.w");
    const Tensor& bd = p.at(pre + ".down.b");
    std::vector<double> out(t * d);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double acc = bd[j];
            for (std::size_t q = 0; q < half; ++q) acc += gated[i * half + q] * wd[j * half + q];
            out[i * d + j] = acc;
        }
    return out;
}

ParamMap cgmlp_params(std::size_t d, std::size_t expansion, std::size_t kernel, std::uint64_t seed) {
    ParamMap p;
    Rng rng(seed);
    ParamInit init(p, rng);
    init_cgmlp(init, "m", d, expansion, kernel);
    vsr::testing::perturb_params(p, rng, 0.2);
    return p;
}

}  // namespace

TEST_CASE("positional encoding") {
    const Tensor pe = positional_encoding(8, 6);
    for (std::size_t k = 0; k < 6; ++k) CHECK(pe[k] == (k % 2 == 0 ? 0.0f : 1.0f));
    for (real v : pe.data()) CHECK(std::abs(v) <= 1.0f);
    const Tensor short_pe = positional_encoding(4, 6);
    for (std::size_t i = 0; i < short_pe.numel(); ++i) CHECK(same_bits(short_pe[i], pe[i]));
}

TEST_CASE("encoder output shape for every variant") {
    for (EncoderVariant v : kVariants) {
        CAPTURE(to_string(v));
        const EncoderConfig c = toy_config(v);
        const ParamMap p = init(c, 1);
        Rng rng(2);
        for (std::size_t t : {1u, 3u, 12u}) {
            const EncoderOutput out = encoder_forward(p, c, random_tensor({t, 10}, rng));
            CHECK(out.states.shape() == Shape{t, 16});
            CHECK(out.length == t);
            CHECK(out.states.all_finite());
        }
    }
}

TEST_CASE("zero-layer encoder is the input projection") {
    for (EncoderVariant v : kVariants) {
        EncoderConfig c = toy_config(v, 0);
        const ParamMap p = init(c, 3);
        Rng rng(4);
        const Tensor x = random_tensor({7, 10}, rng);
        const Tensor proj = linear(x, p.at("encoder.input.w"), p.at("encoder.input.b"));
        CHECK(bitwise_equal(encoder_forward(p, c, x).states, add_tensors(proj, positional_encoding(7, 16))));
        c.positional_encoding = false;
        CHECK(bitwise_equal(encoder_forward(p, c, x).states, proj));
    }
}

TEST_CASE("permutation probe") {
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[0], perm[4]);
    for (EncoderVariant v : kVariants) {
        CAPTURE(to_string(v));
        EncoderConfig c = toy_config(v);
        c.positional_encoding = false;
        Rng rng(5);
        const Tensor x = random_tensor({9, 10}, rng);
        SUBCASE("attention-only ablation is permutation-equivariant") {
            c.local_branch = false;
            const ParamMap p = init(c, 6);
            const Tensor y = encoder_forward(p, c, x).states;
            const Tensor yp = encoder_forward(p, c, permute_rows(x, perm)).states;
            CHECK(max_abs_diff(yp, permute_rows(y, perm)) < 1e-5);
        }
        SUBCASE("local branch breaks permutation equivariance") {
            const ParamMap p = init(c, 6);
            const Tensor y = encoder_forward(p, c, x).states;
            const Tensor yp = encoder_forward(p, c, permute_rows(x, perm)).states;
            CHECK(max_abs_diff(yp, permute_rows(y, perm)) > 1e-3);
        }
    }
}

TEST_CASE("cgmlp gate cases") {
    ParamMap p = cgmlp_params(4, 2, 3, 7);
    Rng rng(8);
    const Tensor x = random_tensor({5, 4}, rng);
    std::fill(p["m.gate_conv.w"].storage().begin(), p["m.gate_conv.w"].storage().end(), 0.0f);
    SUBCASE("unit gate passes the content half") {
        std::fill(p["m.gate_conv.b"].storage().begin(), p["m.gate_conv.b"].storage().end(), 1.0f);
        const Tensor h = gelu(linear(x, p.at("m.up.w"), p.at("m.up.b")));
        Tensor content({5, 4});
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 4; ++j) content[i * 4 + j] = h[i * 8 + j];
        const Tensor expect = linear(content, p.at("m.down.w"), p.at("m.down.b"));
        CHECK(bitwise_equal(cgmlp_forward(p, "m", x), expect));
    }
    SUBCASE("zero gate leaves the down-projection bias") {
        std::fill(p["m.gate_conv.b"].storage().begin(), p["m.gate_conv.b"].storage().end(), 0.0f);
        const Tensor y = cgmlp_forward(p, "m", x);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(y[i * 4 + j] == p.at("m.down.b")[j]);
    }
}

TEST_CASE("cgmlp matches a scalar oracle (T=5, d=8)") {
    const ParamMap p = cgmlp_params(8, 3, 3, 9);
    Rng rng(10);
    const Tensor x = random_tensor({5, 8}, rng);
    const Tensor y = cgmlp_forward(p, "m", x);
    const std::vector<double> expect = cgmlp_oracle(p, "m", x);
    double worst = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) worst = std::max(worst, std::abs(y[i] - expect[i]));
    CHECK(worst < 1e-6);
}

TEST_CASE("encoder configuration errors") {
    ParamMap p;
    Rng rng(11);
    ParamInit init(p, rng);
    CHECK_THROWS_AS(init_cgmlp(init, "odd", 3, 1, 3), ConfigError);
    CHECK_THROWS_AS(parse_encoder_variant("transformer"), ConfigError);
    CHECK(parse_encoder_variant("e_branchformer") == EncoderVariant::e_branchformer);
    EncoderConfig c = toy_config(EncoderVariant::conformer);
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    // Weights built for another config.
    const EncoderConfig small = toy_config(EncoderVariant::branchformer, 1, 8, 2);
    const EncoderConfig big = toy_config(EncoderVariant::branchformer, 1, 16, 2);
    ParamMap q;
    init_encoder(q, small, rng);
    CHECK_THROWS_AS(encoder_forward(q, big, Tensor({3, 10})), ConfigError);
    const EncoderConfig other = toy_config(EncoderVariant::e_branchformer, 1, 8, 2);
    CHECK_THROWS_AS(encoder_forward(q, other, Tensor({3, 10})), ConfigError);
}

TEST_CASE("encoder default configuration") {
    const EncoderConfig c;
    CHECK(c.layers == 12);
    CHECK(c.d_model == 256);
    CHECK(c.heads == 4);
    CHECK(c.ffn_dim == 1024);
    CHECK(c.variant == EncoderVariant::e_branchformer);
}

TEST_CASE("kernel longer than the sequence equals the trimmed kernel") {
    EncoderConfig c = toy_config(EncoderVariant::e_branchformer);
    c.kernel = 31;
    c.merge_kernel = 31;
    const ParamMap p = init(c, 12);
    Rng rng(13);
    const std::size_t t = 4;  // 2T-1 = 7
    const Tensor x = random_tensor({t, 10}, rng);
    EncoderConfig trimmed = c;
    trimmed.kernel = 7;
    trimmed.merge_kernel = 7;
    ParamMap q = p;
    for (auto& [name, tensor] : q) {
        if (tensor.rank() == 2 && tensor.dim(1) == 31) {
            Tensor cut({tensor.dim(0), 7});
            for (std::size_t r = 0; r < tensor.dim(0); ++r)
                for (std::size_t k = 0; k < 7; ++k) cut[r * 7 + k] = tensor[r * 31 + 12 + k];
            tensor = cut;
        }
    }
    CHECK(bitwise_equal(encoder_forward(p, c, x).states, encoder_forward(q, trimmed, x).states));
}

TEST_CASE("encoder is deterministic") {
    const EncoderConfig c = toy_config(EncoderVariant::e_branchformer);
    const ParamMap p = init(c, 14);
    Rng rng(15);
    const Tensor x = random_tensor({6, 10}, rng);
    CHECK(bitwise_equal(encoder_forward(p, c, x).states, encoder_forward(p, c, x).states));
}
