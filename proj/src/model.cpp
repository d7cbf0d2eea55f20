#include "vsr/model.hpp"

#include <cmath>

#include "vsr/error.hpp"

namespace vsr {

void ModelConfig::validate() const {
    const Vocabulary v = vocab();
    if (v.regular_ids().empty()) throw ConfigError("model: vocabulary has no regular tokens");
    if (crop == 0) throw ConfigError("model: crop must be positive");
    frontend.validate();
    frontend.spatial_trajectory(crop);
    encoder.validate();
    decoder.validate();
    if (encoder.input_dim != frontend.output_dim())
        throw ConfigError("model: encoder input_dim " + std::to_string(encoder.input_dim) + " != frontend output " +
                          std::to_string(frontend.output_dim()));
    if (decoder.d_model != encoder.d_model)
        throw ConfigError("model: decoder d_model " + std::to_string(decoder.d_model) + " != encoder d_model " +
                          std::to_string(encoder.d_model));
    if (use_lm) lm.validate();
}

ModelConfig ModelConfig::toy(const Vocabulary& vocab, std::size_t crop, std::size_t d_model) {
    ModelConfig c;
    c.vocabulary = vocab.tokens();
    c.crop = crop;
    c.frontend.num_blocks = 3;
    c.frontend.block_channels = {2, 4, 16};
    c.encoder.input_dim = c.frontend.output_dim();
    c.encoder.layers = 2;
    c.encoder.d_model = d_model;
    c.encoder.heads = 4;
    c.encoder.ffn_dim = 2 * d_model;
    c.encoder.cgmlp_expansion = 2;
    c.encoder.kernel = 7;
    c.encoder.merge_kernel = 7;
    c.decoder.layers = 2;
    c.decoder.d_model = d_model;
    c.decoder.heads = 4;
    c.decoder.ffn_dim = 2 * d_model;
    c.lm.layers = 2;
    c.lm.d_model = d_model;
    c.lm.heads = 4;
    c.lm.ffn_dim = 2 * d_model;
    return c;
}

ParamMap init_model(const ModelConfig& config, Rng& rng) {
    config.validate();
    ParamMap p;
    init_frontend(p, config.frontend, rng);
    init_encoder(p, config.encoder, rng);
    ParamInit(p, rng).linear("ctc.out", config.encoder.d_model, config.vocab_size());
    init_decoder(p, config.decoder, config.vocab_size(), rng);
    if (config.use_lm) init_lm(p, config.lm, config.vocab_size(), rng);
    return p;
}

Tensor model_input(const VideoTensor& video, const ModelConfig& config) {
    validate_video(video);
    if (video.channels() != config.frontend.input_channels)
        throw DataError("model: clip has " + std::to_string(video.channels()) + " channels, model expects " +
                        std::to_string(config.frontend.input_channels));
    if (video.height() == config.crop && video.width() == config.crop) return to_channels_first(video);
    if (video.height() < config.crop || video.width() < config.crop)
        throw DataError("model: clip " + std::to_string(video.height()) + "x" + std::to_string(video.width()) +
                        " is smaller than the crop " + std::to_string(config.crop));
    return to_channels_first(center_crop(video, config.crop));
}

ad::Var encode(const ParamView& params, const ModelConfig& config, const ad::Var& input, const ForwardContext& ctx) {
    return encoder_forward(params, config.encoder, frontend_forward(params, config.frontend, input), ctx);
}

Tensor encode(const ParamMap& params, const ModelConfig& config, const Tensor& input) {
    return encode(ParamView::constants(params), config, ad::constant(input)).value();
}

ad::Var ctc_log_probs(const ParamView& params, const ad::Var& states) {
    return ad::log_softmax(nn::linear(params, "ctc.out", states));
}

Tensor ctc_log_probs(const ParamMap& params, const Tensor& states) {
    return ctc_log_probs(ParamView::constants(params), ad::constant(states)).value();
}

LossParts joint_loss(const ParamView& params, const ModelConfig& config, const Tensor& input,
                     std::span<const int> transcript, const JointLossConfig& loss, const ForwardContext& ctx) {
    loss.validate();
    const Vocabulary vocab = config.vocab();
    for (int y : transcript)
        if (!vocab.contains(y) || y == vocab.blank() || y == vocab.sos_eos())
            throw DataError("transcript id " + std::to_string(y) + " is not a regular token");
    const ad::Var states = encode(params, config, ad::constant(input), ctx);
    LossParts parts;
    parts.ctc = ctc_loss(ctc_log_probs(params, states), transcript, vocab.blank());
    parts.ctc_feasible = std::isfinite(static_cast<double>(parts.ctc.value()[0]));

    std::vector<int> in{vocab.sos_eos()};
    in.insert(in.end(), transcript.begin(), transcript.end());
    std::vector<int> target(transcript.begin(), transcript.end());
    target.push_back(vocab.sos_eos());
    parts.ce = ce_loss(decoder_forward(params, config.decoder, in, states, ctx), target, loss.label_smoothing);
    parts.joint = combine_losses(parts.ctc, parts.ce, loss.ctc_weight);
    return parts;
}

ad::Var lm_loss(const ParamView& params, const ModelConfig& config, std::span<const int> transcript,
                const ForwardContext& ctx) {
    if (!config.use_lm) throw ConfigError("model has no language model");
    const int sos = config.vocab().sos_eos();
    std::vector<int> in{sos};
    in.insert(in.end(), transcript.begin(), transcript.end());
    std::vector<int> target(transcript.begin(), transcript.end());
    target.push_back(sos);
    return ce_loss(lm_forward(params, config.lm, in, ctx), target, 0.0);
}

}  // namespace vsr
