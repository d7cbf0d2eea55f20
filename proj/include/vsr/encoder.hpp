#pragma once

// Sequence encoders over frontend features: Conformer, Branchformer and
// E-Branchformer blocks behind one interface.

#include <string>

#include "vsr/nn.hpp"

namespace vsr {

enum class EncoderVariant { conformer, branchformer, e_branchformer };

std::string to_string(EncoderVariant variant);
// Throws ConfigError for an unknown name.
EncoderVariant parse_encoder_variant(const std::string& name);

struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::e_branchformer;
    std::size_t input_dim = 256;
    std::size_t layers = 12;
    std::size_t d_model = 256;
    std::size_t heads = 4;
    std::size_t ffn_dim = 1024;
    std::size_t cgmlp_expansion = 4;
    // Depthwise kernel of the Conformer conv module and the cgMLP gate.
    std::size_t kernel = 31;
    // Depthwise kernel over the concatenated branches (E-Branchformer merge).
    std::size_t merge_kernel = 31;
    real dropout = 0.0f;
    bool positional_encoding = true;
    // false: attention-only ablation (no conv module / cgMLP / merge conv).
    bool local_branch = true;
    real norm_eps = 1e-5f;

    void validate() const;
    std::size_t cgmlp_dim() const { return cgmlp_expansion * d_model; }
};

struct EncoderOutput {
    Tensor states;           // [T, d_model]
    std::size_t length = 0;  // valid frames
};

// Parameters under "<prefix>.input", "<prefix>.layers.<i>.*", "<prefix>.after_norm".
void init_encoder(ParamMap& params, const EncoderConfig& config, Rng& rng, const std::string& prefix = "encoder");

// features [T, input_dim] -> states [T, d_model]. The input projection is a
// linear map plus the sinusoidal encoding when enabled; with zero layers the
// output is exactly that projection.
ad::Var encoder_forward(const ParamView& params, const EncoderConfig& config, const ad::Var& features,
                        const ForwardContext& ctx = {}, const std::string& prefix = "encoder");
EncoderOutput encoder_forward(const ParamMap& params, const EncoderConfig& config, const Tensor& features,
                              const std::string& prefix = "encoder");

// cgMLP under `prefix`: up [E,d] -> GELU -> split (content | gate);
// gate -> layer norm -> depthwise temporal conv; content * gate -> down [d,E/2].
void init_cgmlp(ParamInit& init, const std::string& prefix, std::size_t d_model, std::size_t expansion,
                std::size_t kernel);
ad::Var cgmlp_forward(const ParamView& params, const std::string& prefix, const ad::Var& x, real norm_eps = 1e-5f,
                      real dropout = 0.0f, const ForwardContext& ctx = {});
Tensor cgmlp_forward(const ParamMap& params, const std::string& prefix, const Tensor& x, real norm_eps = 1e-5f);

}  // namespace vsr
