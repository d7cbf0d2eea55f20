#pragma once

// The assembled recognizer: frontend -> encoder -> {CTC head, attention
// decoder}, plus an optional external language model trained on the same
// transcripts and used for shallow fusion at decode time.

#include <span>
#include <string>
#include <vector>

#include "vsr/decoder.hpp"
#include "vsr/encoder.hpp"
#include "vsr/frontend.hpp"
#include "vsr/losses.hpp"
#include "vsr/text.hpp"
#include "vsr/video.hpp"

namespace vsr {

struct ModelConfig {
    std::vector<std::string> vocabulary;  // token list; ids are positions
    std::size_t crop = 32;                // input frames are N x N
    FrontendConfig frontend;
    EncoderConfig encoder;
    DecoderConfig decoder;
    bool use_lm = true;
    LmConfig lm;

    // Checks every part plus the couplings: encoder input = frontend output,
    // decoder width = encoder width, spatial trajectory valid for `crop`.
    void validate() const;
    Vocabulary vocab() const { return Vocabulary(vocabulary); }
    std::size_t vocab_size() const { return vocabulary.size(); }

    // Desk-scale configuration used by the toy experiments.
    static ModelConfig toy(const Vocabulary& vocab, std::size_t crop, std::size_t d_model = 32);
};

// Parameters under "frontend.", "encoder.", "ctc.out", "decoder." and "lm.".
ParamMap init_model(const ModelConfig& config, Rng& rng);

// Model input [C,T,N,N] from a clip, centre-cropped to config.crop when larger.
Tensor model_input(const VideoTensor& video, const ModelConfig& config);

// input [C,T,N,N] -> encoder states [T,d].
ad::Var encode(const ParamView& params, const ModelConfig& config, const ad::Var& input, const ForwardContext& ctx = {});
Tensor encode(const ParamMap& params, const ModelConfig& config, const Tensor& input);

// states [T,d] -> CTC log-probs [T,V].
ad::Var ctc_log_probs(const ParamView& params, const ad::Var& states);
Tensor ctc_log_probs(const ParamMap& params, const Tensor& states);

struct LossParts {
    ad::Var ctc;
    ad::Var ce;
    ad::Var joint;
    bool ctc_feasible = true;
};

// Decoder input is sos + transcript, its targets transcript + eos.
LossParts joint_loss(const ParamView& params, const ModelConfig& config, const Tensor& input,
                     std::span<const int> transcript, const JointLossConfig& loss, const ForwardContext& ctx = {});

// Unsmoothed next-token cross-entropy of the LM over sos + transcript + eos.
ad::Var lm_loss(const ParamView& params, const ModelConfig& config, std::span<const int> transcript,
                const ForwardContext& ctx = {});

}  // namespace vsr
