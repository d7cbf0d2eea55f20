#include "vsr/encoder.hpp"

#include "vsr/error.hpp"

namespace vsr {

std::string to_string(EncoderVariant variant) {
    switch (variant) {
        case EncoderVariant::conformer: return "conformer";
        case EncoderVariant::branchformer: return "branchformer";
        case EncoderVariant::e_branchformer: return "e_branchformer";
    }
    throw ConfigError("unknown encoder variant");
}

EncoderVariant parse_encoder_variant(const std::string& name) {
    if (name == "conformer") return EncoderVariant::conformer;
    if (name == "branchformer") return EncoderVariant::branchformer;
    if (name == "e_branchformer") return EncoderVariant::e_branchformer;
    throw ConfigError("unknown encoder variant '" + name + "'");
}

void EncoderConfig::validate() const {
    if (d_model == 0 || heads == 0 || input_dim == 0 || ffn_dim == 0) throw ConfigError("encoder: dimensions must be positive");
    if (d_model % heads != 0)
        throw ConfigError("encoder: d_model " + std::to_string(d_model) + " is not divisible by heads " +
                          std::to_string(heads));
    if (kernel % 2 == 0 || merge_kernel % 2 == 0) throw ConfigError("encoder: depthwise kernels must be odd");
    if (variant != EncoderVariant::conformer && cgmlp_dim() % 2 != 0)
        throw ConfigError("encoder: cgmlp_expansion * d_model must be even");
    if (cgmlp_expansion == 0) throw ConfigError("encoder: cgmlp_expansion must be positive");
    if (!(dropout >= 0.0f && dropout < 1.0f)) throw ConfigError("encoder: dropout must be in [0,1)");
    if (!(norm_eps > 0.0f)) throw ConfigError("encoder: norm_eps must be positive");
}

namespace {

std::string layer_name(const std::string& prefix, std::size_t i) { return prefix + ".layers." + std::to_string(i); }

}  // namespace

void init_cgmlp(ParamInit& init, const std::string& prefix, std::size_t d_model, std::size_t expansion,
                std::size_t kernel) {
    const std::size_t e = expansion * d_model;
    if (e % 2 != 0) throw ConfigError("cgmlp: expansion * d_model must be even, got " + std::to_string(e));
    init.linear(prefix + ".up", d_model, e);
    init.norm(prefix + ".gate_norm", e / 2);
    init.depthwise(prefix + ".gate_conv", e / 2, kernel);
    init.linear(prefix + ".down", e / 2, d_model);
}

void init_encoder(ParamMap& params, const EncoderConfig& c, Rng& rng, const std::string& prefix) {
    c.validate();
    ParamInit init(params, rng);
    const std::size_t d = c.d_model;
    init.linear(prefix + ".input", c.input_dim, d);
    for (std::size_t i = 0; i < c.layers; ++i) {
        const std::string l = layer_name(prefix, i);
        const bool macaron = c.variant != EncoderVariant::branchformer;
        if (macaron) {
            init.norm(l + ".ffn1.norm", d);
            init.feed_forward(l + ".ffn1", d, c.ffn_dim);
        }
        init.norm(l + ".attn.norm", d);
        init.attention(l + ".attn", d);
        if (c.variant == EncoderVariant::conformer) {
            if (c.local_branch) {
                init.norm(l + ".conv.norm", d);
                init.linear(l + ".conv.pw1", d, 2 * d);
                init.depthwise(l + ".conv.dw", d, c.kernel);
                init.norm(l + ".conv.dw_norm", d);
                init.linear(l + ".conv.pw2", d, d);
            }
        } else {
            const std::size_t merged = c.local_branch ? 2 * d : d;
            if (c.local_branch) {
                init.norm(l + ".cgmlp.norm", d);
                init_cgmlp(init, l + ".cgmlp", d, c.cgmlp_expansion, c.kernel);
                if (c.variant == EncoderVariant::e_branchformer) init.depthwise(l + ".merge.fusion", merged, c.merge_kernel);
            }
            init.linear(l + ".merge.proj", merged, d);
        }
        if (macaron) {
            init.norm(l + ".ffn2.norm", d);
            init.feed_forward(l + ".ffn2", d, c.ffn_dim);
            init.norm(l + ".final_norm", d);
        }
    }
    if (c.layers > 0) init.norm(prefix + ".after_norm", d);
}

ad::Var cgmlp_forward(const ParamView& p, const std::string& prefix, const ad::Var& x, real eps, real dropout_p,
                      const ForwardContext& ctx) {
    const ad::Var h = ad::gelu(nn::linear(p, prefix + ".up", x));
    const std::size_t e = h.shape().back();
    if (e % 2 != 0) throw ConfigError("cgmlp: expansion * d_model must be even, got " + std::to_string(e));
    const ad::Var content = ad::slice_last(h, 0, e / 2);
    ad::Var gate = nn::norm(p, prefix + ".gate_norm", ad::slice_last(h, e / 2, e / 2), eps);
    gate = ad::depthwise_conv1d_time(gate, p(prefix + ".gate_conv.w"), p(prefix + ".gate_conv.b"));
    const ad::Var gated = dropout(ad::mul(content, gate), dropout_p, ctx);
    return nn::linear(p, prefix + ".down", gated);
}

Tensor cgmlp_forward(const ParamMap& params, const std::string& prefix, const Tensor& x, real eps) {
    return cgmlp_forward(ParamView::constants(params), prefix, ad::constant(x), eps).value();
}

namespace {

struct BlockContext {
    const ParamView& p;
    const EncoderConfig& c;
    const ForwardContext& ctx;

    ad::Var norm(const std::string& name, const ad::Var& x) const { return nn::norm(p, name, x, c.norm_eps); }
    ad::Var drop(const ad::Var& x) const { return dropout(x, c.dropout, ctx); }

    ad::Var half_ffn(const std::string& l, const std::string& name, const ad::Var& x) const {
        const ad::Var h = nn::feed_forward(p, l + "." + name, norm(l + "." + name + ".norm", x), Activation::swish,
                                           c.dropout, ctx);
        return ad::add(x, ad::scale(drop(h), 0.5f));
    }

    ad::Var self_attention(const std::string& l, const ad::Var& x) const {
        const ad::Var h = norm(l + ".attn.norm", x);
        return drop(nn::attention(p, l + ".attn", h, h, c.heads));
    }

    // pointwise (d -> 2d), GLU, depthwise, norm, swish, pointwise.
    ad::Var conv_module(const std::string& l, const ad::Var& x) const {
        const std::size_t d = c.d_model;
        ad::Var h = nn::linear(p, l + ".conv.pw1", norm(l + ".conv.norm", x));
        h = ad::mul(ad::slice_last(h, 0, d), ad::sigmoid(ad::slice_last(h, d, d)));
        h = ad::depthwise_conv1d_time(h, p(l + ".conv.dw.w"), p(l + ".conv.dw.b"));
        h = ad::swish(norm(l + ".conv.dw_norm", h));
        return drop(nn::linear(p, l + ".conv.pw2", h));
    }

    ad::Var local_branch(const std::string& l, const ad::Var& x) const {
        return drop(cgmlp_forward(p, l + ".cgmlp", norm(l + ".cgmlp.norm", x), c.norm_eps, c.dropout, ctx));
    }

    ad::Var conformer(const std::string& l, ad::Var x) const {
        x = half_ffn(l, "ffn1", x);
        x = ad::add(x, self_attention(l, x));
        if (c.local_branch) x = ad::add(x, conv_module(l, x));
        x = half_ffn(l, "ffn2", x);
        return norm(l + ".final_norm", x);
    }

    ad::Var branchformer(const std::string& l, const ad::Var& x) const {
        ad::Var merged = self_attention(l, x);
        if (c.local_branch) merged = ad::concat_last(merged, local_branch(l, x));
        return ad::add(x, drop(nn::linear(p, l + ".merge.proj", merged)));
    }

    ad::Var e_branchformer(const std::string& l, ad::Var x) const {
        x = half_ffn(l, "ffn1", x);
        ad::Var merged = self_attention(l, x);
        if (c.local_branch) {
            merged = ad::concat_last(merged, local_branch(l, x));
            merged = ad::add(merged, ad::depthwise_conv1d_time(merged, p(l + ".merge.fusion.w"), p(l + ".merge.fusion.b")));
        }
        x = ad::add(x, drop(nn::linear(p, l + ".merge.proj", merged)));
        x = half_ffn(l, "ffn2", x);
        return norm(l + ".final_norm", x);
    }
};

}  // namespace

ad::Var encoder_forward(const ParamView& p, const EncoderConfig& c, const ad::Var& features, const ForwardContext& ctx,
                        const std::string& prefix) {
    c.validate();
    if (features.shape().size() != 2 || features.shape()[1] != c.input_dim)
        throw DimensionError("encoder: expected features [T," + std::to_string(c.input_dim) + "], got " +
                             shape_str(features.shape()));
    const std::size_t t = features.shape()[0];
    if (p(prefix + ".input.w").shape() != Shape{c.d_model, c.input_dim})
        throw ConfigError("encoder: input projection weight " + shape_str(p(prefix + ".input.w").shape()) +
                          " does not match the config");
    ad::Var x = nn::linear(p, prefix + ".input", features);
    if (c.positional_encoding) x = ad::add(x, ad::constant(positional_encoding(t, c.d_model)));
    if (c.layers == 0) return x;
    x = dropout(x, c.dropout, ctx);
    const BlockContext block{p, c, ctx};
    for (std::size_t i = 0; i < c.layers; ++i) {
        const std::string l = layer_name(prefix, i);
        switch (c.variant) {
            case EncoderVariant::conformer: x = block.conformer(l, x); break;
            case EncoderVariant::branchformer: x = block.branchformer(l, x); break;
            case EncoderVariant::e_branchformer: x = block.e_branchformer(l, x); break;
        }
    }
    return nn::norm(p, prefix + ".after_norm", x, c.norm_eps);
}

EncoderOutput encoder_forward(const ParamMap& params, const EncoderConfig& config, const Tensor& features,
                              const std::string& prefix) {
    EncoderOutput out;
    out.states = encoder_forward(ParamView::constants(params), config, ad::constant(features), {}, prefix).value();
    out.length = out.states.dim(0);
    return out;
}

}  // namespace vsr
