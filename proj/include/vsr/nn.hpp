#pragma once

// Named parameter storage and the small building blocks shared by the
// frontend, encoders, decoder and language model.

#include <map>
#include <string>

#include "vsr/autograd.hpp"
#include "vsr/rng.hpp"

namespace vsr {

using ParamMap = std::map<std::string, Tensor>;

// Name -> Var lookup over a ParamMap. Trainable views create gradient leaves.
class ParamView {
public:
    static ParamView constants(const ParamMap& params);
    static ParamView trainable(const ParamMap& params);
    static ParamView from_vars(std::map<std::string, ad::Var> vars);

    const ad::Var& operator()(const std::string& name) const;
    bool contains(const std::string& name) const { return vars_.count(name) != 0; }
    const std::map<std::string, ad::Var>& vars() const { return vars_; }

private:
    std::map<std::string, ad::Var> vars_;
};

// Training-time switches threaded through model forwards.
struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout
};

// Inverted dropout; identity outside training or when p == 0.
ad::Var dropout(const ad::Var& x, real p, const ForwardContext& ctx);

class ParamInit {
public:
    ParamInit(ParamMap& params, Rng& rng) : params_(params), rng_(rng) {}

    // Xavier-uniform weight [out,in] and zero bias.
    void linear(const std::string& prefix, std::size_t in, std::size_t out, bool bias = true);
    void norm(const std::string& prefix, std::size_t d);
    void conv3d(const std::string& prefix, std::size_t in, std::size_t out, std::size_t k, bool bias = true);
    void depthwise(const std::string& prefix, std::size_t channels, std::size_t k);
    void embedding(const std::string& name, std::size_t vocab, std::size_t d);
    void attention(const std::string& prefix, std::size_t d);
    void feed_forward(const std::string& prefix, std::size_t d, std::size_t hidden);

private:
    void add(const std::string& name, Tensor t);
    Tensor uniform(Shape shape, double bound);

    ParamMap& params_;
    Rng& rng_;
};

enum class Activation { relu, gelu, swish };

namespace nn {

ad::Var linear(const ParamView& p, const std::string& prefix, const ad::Var& x);
ad::Var norm(const ParamView& p, const std::string& prefix, const ad::Var& x, real eps = 1e-5f);
ad::Var activate(const ad::Var& x, Activation act);

// prefix.w1/b1 -> act -> prefix.w2/b2
ad::Var feed_forward(const ParamView& p, const std::string& prefix, const ad::Var& x, Activation act,
                     real dropout_p = 0.0f, const ForwardContext& ctx = {});

// prefix.{wq,bq,wk,bk,wv,bv,wo,bo}
ad::Var attention(const ParamView& p, const std::string& prefix, const ad::Var& query_in, const ad::Var& kv_in,
                  std::size_t heads, const AttentionMask* mask = nullptr);

// Tensor-level equivalents used by incremental decoding; bitwise identical
// row for row to the Var forms above.
Tensor linear(const ParamMap& p, const std::string& prefix, const Tensor& x);
Tensor norm(const ParamMap& p, const std::string& prefix, const Tensor& x, real eps = 1e-5f);
Tensor feed_forward(const ParamMap& p, const std::string& prefix, const Tensor& x, Activation act);
const Tensor& param(const ParamMap& p, const std::string& name);

}  // namespace nn

// Elementwise real sum, same arithmetic as ad::add.
Tensor add_tensors(const Tensor& a, const Tensor& b);

std::size_t parameter_count(const ParamMap& params);

}  // namespace vsr
