#pragma once

// Autoregressive Transformer decoder with cross-attention, and a
// decoder-only Transformer language model. Both run either as a full
// causal forward over a token sequence (training, batch scoring) or one
// token at a time with cached keys/values; the two paths agree bitwise.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vsr/nn.hpp"

namespace vsr {

struct DecoderConfig {
    std::size_t layers = 6;
    std::size_t d_model = 256;
    std::size_t heads = 4;
    std::size_t ffn_dim = 2048;
    real dropout = 0.0f;
    real norm_eps = 1e-5f;

    void validate() const;
};

struct LmConfig {
    std::size_t layers = 24;
    std::size_t d_model = 512;
    std::size_t heads = 8;
    std::size_t ffn_dim = 2048;
    bool tie_embeddings = true;
    real dropout = 0.0f;
    real norm_eps = 1e-5f;

    void validate() const;
};

// Parameters: "<prefix>.embed", "<prefix>.layers.<i>.{self_attn,src_attn,ffn}[.norm]",
// "<prefix>.after_norm", "<prefix>.out".
void init_decoder(ParamMap& params, const DecoderConfig& config, std::size_t vocab_size, Rng& rng,
                  const std::string& prefix = "decoder");
// As the decoder without src_attn; with tied embeddings only "<prefix>.out.b".
void init_lm(ParamMap& params, const LmConfig& config, std::size_t vocab_size, Rng& rng,
             const std::string& prefix = "lm");

// tokens (starting with sos) [L], memory [T,d] -> log-probs [L,V]. Row t
// depends on tokens[0..t] and all memory rows.
ad::Var decoder_forward(const ParamView& params, const DecoderConfig& config, std::span<const int> tokens,
                        const ad::Var& memory, const ForwardContext& ctx = {}, const std::string& prefix = "decoder");
Tensor decoder_forward(const ParamMap& params, const DecoderConfig& config, std::span<const int> tokens,
                       const Tensor& memory, const std::string& prefix = "decoder");

ad::Var lm_forward(const ParamView& params, const LmConfig& config, std::span<const int> tokens,
                   const ForwardContext& ctx = {}, const std::string& prefix = "lm");
Tensor lm_forward(const ParamMap& params, const LmConfig& config, std::span<const int> tokens,
                  const std::string& prefix = "lm");

// Per-layer self-attention keys/values of the tokens consumed so far.
struct KvCache {
    std::size_t length = 0;
    std::vector<std::vector<real>> keys;    // layer -> [length * d]
    std::vector<std::vector<real>> values;  // layer -> [length * d]
};

// Cross-attention keys/values of the encoder states, computed once per utterance.
struct DecoderMemory {
    std::vector<Tensor> keys;    // layer -> [T,d]
    std::vector<Tensor> values;  // layer -> [T,d]
};

DecoderMemory decoder_memory(const ParamMap& params, const DecoderConfig& config, const Tensor& memory,
                             const std::string& prefix = "decoder");

// Consumes `token` at position cache.length and returns the log-probs of the
// next token; `cache` is extended in place.
Tensor decoder_step(const ParamMap& params, const DecoderConfig& config, const DecoderMemory& memory, KvCache& cache,
                    int token, const std::string& prefix = "decoder");

// Incremental LM state: cache over prefix[0 .. n-2].
struct LmState {
    KvCache cache;
};

// prefix begins with sos; state must cover all but the last prefix token
// (UsageError otherwise). Returns log-probs over the token following prefix
// and the state covering the whole prefix.
std::pair<Tensor, LmState> lm_score_step(std::span<const int> prefix, const LmState& state, const ParamMap& params,
                                         const LmConfig& config, int sos, const std::string& name = "lm");

}  // namespace vsr
