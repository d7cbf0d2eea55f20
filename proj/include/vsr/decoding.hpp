#pragma once

// One-pass joint CTC/attention beam search with language-model shallow
// fusion: combined = (1 - ctc_weight) * att + ctc_weight * ctc + lm_weight * lm.

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vsr/decoder.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

// Per-frame log prefix probabilities of a hypothesis ending in a non-blank
// (r_nb) or blank (r_b), and the prefix score psi.
struct CtcPrefixState {
    std::size_t length = 0;  // tokens consumed after sos
    std::vector<double> r_nb;
    std::vector<double> r_b;
    double psi = 0.0;
};

// Prefix scoring over log_probs [T,V]. `eos` may lie outside the matrix
// columns; extending with eos yields the full sequence probability.
class CtcPrefixScorer {
public:
    CtcPrefixScorer(Tensor log_probs, int blank, int eos);

    CtcPrefixState initial() const;
    // prefix is sos-prefixed and described by `state` (UsageError otherwise).
    // Returns the new prefix score minus the old one, and the new state.
    std::pair<double, CtcPrefixState> step(std::span<const int> prefix, int next, const CtcPrefixState& state) const;
    // log p_ctc(label | x) by the same recursions.
    double sequence_score(std::span<const int> label) const;

    std::size_t frames() const { return log_probs_.dim(0); }
    std::size_t vocab_size() const { return log_probs_.dim(1); }

private:
    Tensor log_probs_;
    int blank_;
    int eos_;
};

using ScorerState = std::shared_ptr<const void>;

// Autoregressive next-token distribution over the full vocabulary.
class TokenScorer {
public:
    virtual ~TokenScorer() = default;
    virtual ScorerState initial() const = 0;
    // prefix is sos-prefixed; `state` covers all but its last token. Returns
    // log-probs of the next token and the state covering the whole prefix.
    virtual std::pair<std::vector<double>, ScorerState> score(std::span<const int> prefix,
                                                              const ScorerState& state) const = 0;
};

// Attention decoder over fixed encoder states, cached per hypothesis.
class DecoderScorer : public TokenScorer {
public:
    DecoderScorer(const ParamMap& params, const DecoderConfig& config, const Tensor& encoder_states);
    ScorerState initial() const override;
    std::pair<std::vector<double>, ScorerState> score(std::span<const int> prefix, const ScorerState& state) const override;

private:
    const ParamMap& params_;
    DecoderConfig config_;
    DecoderMemory memory_;
};

class LmScorer : public TokenScorer {
public:
    LmScorer(const ParamMap& params, const LmConfig& config, int sos);
    ScorerState initial() const override;
    std::pair<std::vector<double>, ScorerState> score(std::span<const int> prefix, const ScorerState& state) const override;

private:
    const ParamMap& params_;
    LmConfig config_;
    int sos_;
};

struct DecodeParams {
    std::size_t beam_size = 48;
    double ctc_weight = 0.5;
    double lm_weight = 0.4;
    double max_len_ratio = 1.0;
    std::size_t nbest = 1;
    double length_bonus = 0.0;
    // Attention(+LM) search first, CTC applied only to finished hypotheses.
    bool rescoring = false;

    void validate() const;
};

struct Hypothesis {
    std::vector<int> tokens;  // sos-prefixed, without the final eos
    double att = 0.0;
    double ctc = 0.0;
    double lm = 0.0;
    double combined = 0.0;
    bool finished = false;
    bool forced = false;  // no hypothesis ended within the length limit
};

using NBestList = std::vector<Hypothesis>;

double combine_scores(double att, double ctc, double lm, std::size_t length, const DecodeParams& params);

// Candidate tokens are every id except blank and sos/eos, plus eos. Ties in
// combined score go to the lexicographically smaller token sequence. The
// attention scorer may be null only when ctc_weight == 1 and the LM only
// when lm_weight == 0. Search stops when no live hypothesis can beat the
// worst of the best `nbest` finished ones, or after ceil(max_len_ratio * T)
// tokens.
NBestList beam_search_joint(const Tensor& ctc_log_probs, const TokenScorer* attention, const TokenScorer* lm,
                            const DecodeParams& params, int blank, int sos_eos);

}  // namespace vsr
