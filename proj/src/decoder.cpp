#include "vsr/decoder.hpp"

#include <algorithm>

#include "vsr/error.hpp"

namespace vsr {

namespace {

void validate_stack(const char* what, std::size_t layers, std::size_t d, std::size_t heads, std::size_t ffn,
                    real dropout, real eps) {
    const std::string w(what);
    if (d == 0 || heads == 0 || ffn == 0) throw ConfigError(w + ": dimensions must be positive");
    if (d % heads != 0)
        throw ConfigError(w + ": d_model " + std::to_string(d) + " is not divisible by heads " + std::to_string(heads));
    if (layers == 0) throw ConfigError(w + ": layers must be at least 1");
    if (!(dropout >= 0.0f && dropout < 1.0f)) throw ConfigError(w + ": dropout must be in [0,1)");
    if (!(eps > 0.0f)) throw ConfigError(w + ": norm_eps must be positive");
}

struct Stack {
    std::size_t layers;
    std::size_t d;
    std::size_t heads;
    real eps;
    real dropout;
    bool cross;
    bool tied;
};

Stack decoder_stack(const DecoderConfig& c) {
    return {c.layers, c.d_model, c.heads, c.norm_eps, c.dropout, true, false};
}

Stack lm_stack(const LmConfig& c) { return {c.layers, c.d_model, c.heads, c.norm_eps, c.dropout, false, c.tie_embeddings}; }

std::string layer_name(const std::string& prefix, std::size_t i) { return prefix + ".layers." + std::to_string(i); }

void init_stack(ParamMap& params, const Stack& s, std::size_t ffn, std::size_t vocab, Rng& rng, const std::string& prefix) {
    if (vocab < 2) throw ConfigError("vocabulary needs at least two tokens");
    ParamInit init(params, rng);
    init.embedding(prefix + ".embed", vocab, s.d);
    for (std::size_t i = 0; i < s.layers; ++i) {
        const std::string l = layer_name(prefix, i);
        init.norm(l + ".self_attn.norm", s.d);
        init.attention(l + ".self_attn", s.d);
        if (s.cross) {
            init.norm(l + ".src_attn.norm", s.d);
            init.attention(l + ".src_attn", s.d);
        }
        init.norm(l + ".ffn.norm", s.d);
        init.feed_forward(l + ".ffn", s.d, ffn);
    }
    init.norm(prefix + ".after_norm", s.d);
    if (s.tied) {
        params.emplace(prefix + ".out.b", Tensor({vocab}));
    } else {
        init.linear(prefix + ".out", s.d, vocab);
    }
}

void check_tokens(std::span<const int> tokens, std::size_t vocab) {
    if (tokens.empty()) throw DataError("empty token sequence");
    for (int t : tokens)
        if (t < 0 || static_cast<std::size_t>(t) >= vocab)
            throw DataError("token id " + std::to_string(t) + " out of range [0," + std::to_string(vocab) + ")");
}

const std::string& output_weight(const Stack& s, const std::string& prefix, std::string& storage) {
    storage = s.tied ? prefix + ".embed" : prefix + ".out.w";
    return storage;
}

ad::Var stack_forward(const ParamView& p, const Stack& s, std::span<const int> tokens, const ad::Var* memory,
                      const ForwardContext& ctx, const std::string& prefix) {
    const ad::Var& embed = p(prefix + ".embed");
    if (embed.shape().size() != 2 || embed.shape()[1] != s.d)
        throw ConfigError(prefix + ": embedding " + shape_str(embed.shape()) + " does not match d_model " +
                          std::to_string(s.d));
    check_tokens(tokens, embed.shape()[0]);
    const std::size_t len = tokens.size();
    ad::Var x = ad::add(ad::embedding(tokens, embed), ad::constant(positional_encoding(len, s.d)));
    x = dropout(x, s.dropout, ctx);
    const AttentionMask causal = AttentionMask::causal(len);
    for (std::size_t i = 0; i < s.layers; ++i) {
        const std::string l = layer_name(prefix, i);
        ad::Var h = nn::norm(p, l + ".self_attn.norm", x, s.eps);
        x = ad::add(x, dropout(nn::attention(p, l + ".self_attn", h, h, s.heads, &causal), s.dropout, ctx));
        if (s.cross) {
            h = nn::norm(p, l + ".src_attn.norm", x, s.eps);
            x = ad::add(x, dropout(nn::attention(p, l + ".src_attn", h, *memory, s.heads), s.dropout, ctx));
        }
        h = nn::norm(p, l + ".ffn.norm", x, s.eps);
        x = ad::add(x, dropout(nn::feed_forward(p, l + ".ffn", h, Activation::relu, s.dropout, ctx), s.dropout, ctx));
    }
    x = nn::norm(p, prefix + ".after_norm", x, s.eps);
    std::string w;
    return ad::log_softmax(ad::linear(x, p(output_weight(s, prefix, w)), p(prefix + ".out.b")));
}

Tensor row_tensor(const std::vector<real>& data, std::size_t rows, std::size_t d) { return Tensor({rows, d}, data); }

Tensor stack_step(const ParamMap& p, const Stack& s, const DecoderMemory* memory, KvCache& cache, int token,
                  const std::string& prefix) {
    const Tensor& embed = nn::param(p, prefix + ".embed");
    if (embed.rank() != 2 || embed.dim(1) != s.d)
        throw ConfigError(prefix + ": embedding " + shape_str(embed.shape()) + " does not match d_model " +
                          std::to_string(s.d));
    const int ids[1] = {token};
    check_tokens(ids, embed.dim(0));
    if (cache.keys.empty()) {
        cache.keys.assign(s.layers, {});
        cache.values.assign(s.layers, {});
    }
    if (cache.keys.size() != s.layers) throw UsageError(prefix + ": cache has the wrong layer count");
    const std::size_t pos = cache.length, d = s.d;

    const Tensor pe = positional_encoding(pos + 1, d);
    Tensor pe_row({1, d});
    std::copy_n(pe.data().data() + pos * d, d, pe_row.data().data());
    Tensor x = add_tensors(embedding(ids, embed), pe_row);

    for (std::size_t i = 0; i < s.layers; ++i) {
        const std::string l = layer_name(prefix, i);
        const std::string sa = l + ".self_attn";
        Tensor h = nn::norm(p, sa + ".norm", x, s.eps);
        const Tensor q = linear(h, nn::param(p, sa + ".wq"), nn::param(p, sa + ".bq"));
        const Tensor k = linear(h, nn::param(p, sa + ".wk"), nn::param(p, sa + ".bk"));
        const Tensor v = linear(h, nn::param(p, sa + ".wv"), nn::param(p, sa + ".bv"));
        cache.keys[i].insert(cache.keys[i].end(), k.data().begin(), k.data().end());
        cache.values[i].insert(cache.values[i].end(), v.data().begin(), v.data().end());
        const Tensor ctx = scaled_dot_attention(q, row_tensor(cache.keys[i], pos + 1, d),
                                                row_tensor(cache.values[i], pos + 1, d), s.heads);
        x = add_tensors(x, linear(ctx, nn::param(p, sa + ".wo"), nn::param(p, sa + ".bo")));
        if (s.cross) {
            const std::string ca = l + ".src_attn";
            h = nn::norm(p, ca + ".norm", x, s.eps);
            const Tensor cq = linear(h, nn::param(p, ca + ".wq"), nn::param(p, ca + ".bq"));
            const Tensor cctx = scaled_dot_attention(cq, memory->keys[i], memory->values[i], s.heads);
            x = add_tensors(x, linear(cctx, nn::param(p, ca + ".wo"), nn::param(p, ca + ".bo")));
        }
        h = nn::norm(p, l + ".ffn.norm", x, s.eps);
        x = add_tensors(x, nn::feed_forward(p, l + ".ffn", h, Activation::relu));
    }
    cache.length = pos + 1;
    x = nn::norm(p, prefix + ".after_norm", x, s.eps);
    std::string w;
    const Tensor logits = linear(x, nn::param(p, output_weight(s, prefix, w)), nn::param(p, prefix + ".out.b"));
    return log_softmax(logits).reshaped({logits.numel()});
}

}  // namespace

void DecoderConfig::validate() const { validate_stack("decoder", layers, d_model, heads, ffn_dim, dropout, norm_eps); }

void LmConfig::validate() const { validate_stack("lm", layers, d_model, heads, ffn_dim, dropout, norm_eps); }

void init_decoder(ParamMap& params, const DecoderConfig& config, std::size_t vocab_size, Rng& rng,
                  const std::string& prefix) {
    config.validate();
    init_stack(params, decoder_stack(config), config.ffn_dim, vocab_size, rng, prefix);
}

void init_lm(ParamMap& params, const LmConfig& config, std::size_t vocab_size, Rng& rng, const std::string& prefix) {
    config.validate();
    init_stack(params, lm_stack(config), config.ffn_dim, vocab_size, rng, prefix);
}

ad::Var decoder_forward(const ParamView& params, const DecoderConfig& config, std::span<const int> tokens,
                        const ad::Var& memory, const ForwardContext& ctx, const std::string& prefix) {
    config.validate();
    if (memory.shape().size() != 2 || memory.shape()[1] != config.d_model)
        throw DimensionError("decoder: expected memory [T," + std::to_string(config.d_model) + "], got " +
                             shape_str(memory.shape()));
    return stack_forward(params, decoder_stack(config), tokens, &memory, ctx, prefix);
}

Tensor decoder_forward(const ParamMap& params, const DecoderConfig& config, std::span<const int> tokens,
                       const Tensor& memory, const std::string& prefix) {
    return decoder_forward(ParamView::constants(params), config, tokens, ad::constant(memory), {}, prefix).value();
}

ad::Var lm_forward(const ParamView& params, const LmConfig& config, std::span<const int> tokens,
                   const ForwardContext& ctx, const std::string& prefix) {
    config.validate();
    return stack_forward(params, lm_stack(config), tokens, nullptr, ctx, prefix);
}

Tensor lm_forward(const ParamMap& params, const LmConfig& config, std::span<const int> tokens,
                  const std::string& prefix) {
    return lm_forward(ParamView::constants(params), config, tokens, {}, prefix).value();
}

DecoderMemory decoder_memory(const ParamMap& params, const DecoderConfig& config, const Tensor& memory,
                             const std::string& prefix) {
    config.validate();
    if (memory.rank() != 2 || memory.dim(1) != config.d_model)
        throw DimensionError("decoder: expected memory [T," + std::to_string(config.d_model) + "], got " +
                             shape_str(memory.shape()));
    DecoderMemory m;
    for (std::size_t i = 0; i < config.layers; ++i) {
        const std::string ca = layer_name(prefix, i) + ".src_attn";
        m.keys.push_back(linear(memory, nn::param(params, ca + ".wk"), nn::param(params, ca + ".bk")));
        m.values.push_back(linear(memory, nn::param(params, ca + ".wv"), nn::param(params, ca + ".bv")));
    }
    return m;
}

Tensor decoder_step(const ParamMap& params, const DecoderConfig& config, const DecoderMemory& memory, KvCache& cache,
                    int token, const std::string& prefix) {
    if (memory.keys.size() != config.layers) throw UsageError("decoder: memory was built for another layer count");
    return stack_step(params, decoder_stack(config), &memory, cache, token, prefix);
}

std::pair<Tensor, LmState> lm_score_step(std::span<const int> prefix, const LmState& state, const ParamMap& params,
                                         const LmConfig& config, int sos, const std::string& name) {
    if (prefix.empty() || prefix.front() != sos) throw UsageError("lm: prefix must begin with sos");
    if (state.cache.length + 1 != prefix.size())
        throw UsageError("lm: state covers " + std::to_string(state.cache.length) + " tokens but the prefix has " +
                         std::to_string(prefix.size()));
    LmState next = state;
    Tensor logp = stack_step(params, lm_stack(config), nullptr, next.cache, prefix.back(), name);
    return {std::move(logp), std::move(next)};
}

}  // namespace vsr
