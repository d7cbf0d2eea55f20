#include "vsr/nn.hpp"

#include <cmath>

#include "vsr/error.hpp"

namespace vsr {

ParamView ParamView::constants(const ParamMap& params) {
    ParamView v;
    for (const auto& [name, t] : params) v.vars_.emplace(name, ad::constant(t));
    return v;
}

ParamView ParamView::trainable(const ParamMap& params) {
    ParamView v;
    for (const auto& [name, t] : params) v.vars_.emplace(name, ad::parameter(t));
    return v;
}

ParamView ParamView::from_vars(std::map<std::string, ad::Var> vars) {
    ParamView v;
    v.vars_ = std::move(vars);
    return v;
}

const ad::Var& ParamView::operator()(const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ConfigError("missing parameter " + name);
    return it->second;
}

ad::Var dropout(const ad::Var& x, real p, const ForwardContext& ctx) {
    if (!ctx.training || p <= 0.0f) return x;
    if (ctx.rng == nullptr) throw UsageError("dropout in training mode needs an rng");
    if (p >= 1.0f) throw ConfigError("dropout rate must be below 1");
    Tensor mask(x.shape());
    const real keep = 1.0f / (1.0f - p);
    for (real& m : mask.storage()) m = ctx.rng->bernoulli(p) ? 0.0f : keep;
    return ad::mul(x, ad::constant(std::move(mask)));
}

void ParamInit::add(const std::string& name, Tensor t) {
    if (!params_.emplace(name, std::move(t)).second) throw ConfigError("duplicate parameter " + name);
}

Tensor ParamInit::uniform(Shape shape, double bound) {
    Tensor t(std::move(shape));
    for (real& v : t.storage()) v = static_cast<real>(rng_.uniform(-bound, bound));
    return t;
}

void ParamInit::linear(const std::string& prefix, std::size_t in, std::size_t out, bool bias) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    add(prefix + ".w", uniform({out, in}, bound));
    if (bias) add(prefix + ".b", Tensor({out}));
}

void ParamInit::norm(const std::string& prefix, std::size_t d) {
    add(prefix + ".gamma", Tensor({d}, 1.0f));
    add(prefix + ".beta", Tensor({d}));
}

void ParamInit::conv3d(const std::string& prefix, std::size_t in, std::size_t out, std::size_t k, bool bias) {
    const double fan_in = static_cast<double>(in * k * k * k);
    add(prefix + ".w", uniform({out, in, k, k, k}, std::sqrt(6.0 / fan_in)));
    if (bias) add(prefix + ".b", Tensor({out}));
}

void ParamInit::depthwise(const std::string& prefix, std::size_t channels, std::size_t k) {
    add(prefix + ".w", uniform({channels, k}, std::sqrt(3.0 / static_cast<double>(k))));
    add(prefix + ".b", Tensor({channels}));
}

void ParamInit::embedding(const std::string& name, std::size_t vocab, std::size_t d) {
    Tensor t({vocab, d});
    for (real& v : t.storage()) v = static_cast<real>(rng_.normal());
    add(name, std::move(t));
}

void ParamInit::attention(const std::string& prefix, std::size_t d) {
    for (const char* p : {"q", "k", "v", "o"}) {
        const double bound = std::sqrt(6.0 / static_cast<double>(2 * d));
        add(prefix + ".w" + p, uniform({d, d}, bound));
        add(prefix + ".b" + p, Tensor({d}));
    }
}

void ParamInit::feed_forward(const std::string& prefix, std::size_t d, std::size_t hidden) {
    const double bound = std::sqrt(6.0 / static_cast<double>(d + hidden));
    add(prefix + ".w1", uniform({hidden, d}, bound));
    add(prefix + ".b1", Tensor({hidden}));
    add(prefix + ".w2", uniform({d, hidden}, bound));
    add(prefix + ".b2", Tensor({d}));
}

namespace nn {

ad::Var linear(const ParamView& p, const std::string& prefix, const ad::Var& x) {
    const std::string b = prefix + ".b";
    return ad::linear(x, p(prefix + ".w"), p.contains(b) ? p(b) : ad::Var());
}

ad::Var norm(const ParamView& p, const std::string& prefix, const ad::Var& x, real eps) {
    return ad::layer_norm(x, p(prefix + ".gamma"), p(prefix + ".beta"), eps);
}

ad::Var activate(const ad::Var& x, Activation act) {
    switch (act) {
        case Activation::relu: return ad::relu(x);
        case Activation::gelu: return ad::gelu(x);
        case Activation::swish: return ad::swish(x);
    }
    throw ConfigError("unknown activation");
}

ad::Var feed_forward(const ParamView& p, const std::string& prefix, const ad::Var& x, Activation act,
                     real dropout_p, const ForwardContext& ctx) {
    ad::Var h = activate(ad::linear(x, p(prefix + ".w1"), p(prefix + ".b1")), act);
    h = dropout(h, dropout_p, ctx);
    return ad::linear(h, p(prefix + ".w2"), p(prefix + ".b2"));
}

ad::Var attention(const ParamView& p, const std::string& prefix, const ad::Var& query_in, const ad::Var& kv_in,
                  std::size_t heads, const AttentionMask* mask) {
    const ad::Var q = ad::linear(query_in, p(prefix + ".wq"), p(prefix + ".bq"));
    const ad::Var k = ad::linear(kv_in, p(prefix + ".wk"), p(prefix + ".bk"));
    const ad::Var v = ad::linear(kv_in, p(prefix + ".wv"), p(prefix + ".bv"));
    const ad::Var ctx = ad::attention(q, k, v, heads, mask);
    return ad::linear(ctx, p(prefix + ".wo"), p(prefix + ".bo"));
}

const Tensor& param(const ParamMap& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw ConfigError("missing parameter " + name);
    return it->second;
}

Tensor linear(const ParamMap& p, const std::string& prefix, const Tensor& x) {
    auto b = p.find(prefix + ".b");
    return vsr::linear(x, param(p, prefix + ".w"), b == p.end() ? Tensor() : b->second);
}

Tensor norm(const ParamMap& p, const std::string& prefix, const Tensor& x, real eps) {
    return vsr::layer_norm(x, param(p, prefix + ".gamma"), param(p, prefix + ".beta"), eps);
}

Tensor feed_forward(const ParamMap& p, const std::string& prefix, const Tensor& x, Activation act) {
    Tensor h = vsr::linear(x, param(p, prefix + ".w1"), param(p, prefix + ".b1"));
    switch (act) {
        case Activation::relu: h = vsr::relu(h); break;
        case Activation::gelu: h = vsr::gelu(h); break;
        case Activation::swish: h = vsr::swish(h); break;
    }
    return vsr::linear(h, param(p, prefix + ".w2"), param(p, prefix + ".b2"));
}

}  // namespace nn

Tensor add_tensors(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

std::size_t parameter_count(const ParamMap& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

}  // namespace vsr
