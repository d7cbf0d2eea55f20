#include "vsr/autograd.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "vsr/error.hpp"

namespace vsr::ad {

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->op = "parameter";
    return Var(std::move(n));
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn, const char* name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = name;
    for (const Var& v : inputs) {
        if (v.requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) {
        n->inputs.reserve(inputs.size());
        for (const Var& v : inputs) n->inputs.push_back(v.ptr());
        n->backward = std::move(backward_fn);
    }
    return Var(std::move(n));
}

Tensor& grad_buffer(Node& n) {
    if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0f);
    return n.grad;
}

void accumulate(Node& n, const Tensor& g) {
    Tensor& buf = grad_buffer(n);
    for (std::size_t i = 0; i < g.numel(); ++i) buf[i] += g[i];
}

void backward(const Var& loss) {
    if (!loss.defined() || loss.value().numel() != 1) {
        throw UsageError("backward requires a scalar loss");
    }
    backward(loss, Tensor::scalar(1.0f));
}

void backward(const Var& loss, const Tensor& seed) {
    if (!loss.defined()) throw UsageError("backward on an undefined variable");
    if (seed.shape() != loss.shape()) throw DimensionError("backward seed shape does not match root");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
    visited.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    accumulate(*loss.node(), seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

std::vector<Tensor> gradients(const Var& loss, std::span<const Var> params) {
    backward(loss);
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Var& p : params) {
        out.push_back(p.grad().empty() ? Tensor(p.shape(), 0.0f) : p.grad());
    }
    return out;
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": operand shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
}

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

// Elementwise unary op with derivative f'(x, y).
template <typename Fwd, typename Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv, const char* name) {
    Tensor y = fwd(x.value());
    return make_op(std::move(y), {x},
                   [deriv](Node& self) {
                       Node& xi = in(self, 0);
                       Tensor& gx = grad_buffer(xi);
                       for (std::size_t i = 0; i < gx.numel(); ++i) {
                           gx[i] += static_cast<real>(self.grad[i] * deriv(static_cast<double>(xi.value[i]),
                                                                             static_cast<double>(self.value[i])));
                       }
                   },
                   name);
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor y(a.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] + b.value()[i];
    return make_op(std::move(y), {a, b},
                   [](Node& self) {
                       for (std::size_t k = 0; k < 2; ++k) {
                           if (in(self, k).requires_grad) accumulate(in(self, k), self.grad);
                       }
                   },
                   "add");
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor y(a.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] - b.value()[i];
    return make_op(std::move(y), {a, b},
                   [](Node& self) {
                       if (in(self, 0).requires_grad) accumulate(in(self, 0), self.grad);
                       if (in(self, 1).requires_grad) {
                           Tensor& g = grad_buffer(in(self, 1));
                           for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
                       }
                   },
                   "sub");
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor y(a.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * b.value()[i];
    return make_op(std::move(y), {a, b},
                   [](Node& self) {
                       Node& na = in(self, 0);
                       Node& nb = in(self, 1);
                       if (na.requires_grad) {
                           Tensor& g = grad_buffer(na);
                           for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * nb.value[i];
                       }
                       if (nb.requires_grad) {
                           Tensor& g = grad_buffer(nb);
                           for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * na.value[i];
                       }
                   },
                   "mul");
}

Var scale(const Var& a, real s) {
    Tensor y(a.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * s;
    return make_op(std::move(y), {a},
                   [s](Node& self) {
                       Tensor& g = grad_buffer(in(self, 0));
                       for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * s;
                   },
                   "scale");
}

Var sum(const Var& a) {
    double acc = 0.0;
    for (real v : a.value().data()) acc += v;
    return make_op(Tensor::scalar(static_cast<real>(acc)), {a},
                   [](Node& self) {
                       Tensor& g = grad_buffer(in(self, 0));
                       for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
                   },
                   "sum");
}

Var mean(const Var& a) { return scale(sum(a), 1.0f / static_cast<real>(a.value().numel())); }

Var relu(const Var& x) {
    return unary(x, [](const Tensor& t) { return vsr::relu(t); }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; },
                 "relu");
}

Var gelu(const Var& x) {
    return unary(
        x, [](const Tensor& t) { return vsr::gelu(t); },
        [](double v, double) {
            const double c = std::sqrt(2.0 / std::numbers::pi);
            const double u = c * (v + 0.044715 * v * v * v);
            const double th = std::tanh(u);
            return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * c * (1.0 + 3.0 * 0.044715 * v * v);
        },
        "gelu");
}

Var swish(const Var& x) {
    return unary(
        x, [](const Tensor& t) { return vsr::swish(t); },
        [](double v, double) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s + v * s * (1.0 - s);
        },
        "swish");
}

Var sigmoid(const Var& x) {
    return unary(
        x, [](const Tensor& t) { return vsr::sigmoid(t); },
        [](double v, double) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 - s);
        },
        "sigmoid");
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    static const Tensor no_bias;
    Tensor y = vsr::linear(x.value(), weight.value(), bias.defined() ? bias.value() : no_bias);
    std::vector<Var> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_op(std::move(y), std::move(inputs),
                   [](Node& self) {
                       Node& nx = in(self, 0);
                       Node& nw = in(self, 1);
                       const std::size_t d_out = nw.value.dim(0), d_in = nw.value.dim(1);
                       const std::size_t rows = nx.value.rows();
                       real* gx = nx.requires_grad ? grad_buffer(nx).data().data() : nullptr;
                       real* gw = nw.requires_grad ? grad_buffer(nw).data().data() : nullptr;
                       real* gb = (self.inputs.size() > 2 && in(self, 2).requires_grad)
                                       ? grad_buffer(in(self, 2)).data().data()
                                       : nullptr;
                       const real* xv = nx.value.data().data();
                       const real* wv = nw.value.data().data();
                       for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < d_out; ++j) {
                               const real g = self.grad[r * d_out + j];
                               if (g == 0.0f) continue;
                               if (gx) {
                                   for (std::size_t i = 0; i < d_in; ++i) gx[r * d_in + i] += g * wv[j * d_in + i];
                               }
                               if (gw) {
                                   for (std::size_t i = 0; i < d_in; ++i) gw[j * d_in + i] += g * xv[r * d_in + i];
                               }
                               if (gb) gb[j] += g;
                           }
                       }
                   },
                   "linear");
}

namespace {

// Shared backward for normalizations over contiguous groups of `n` values with
// a per-group (gamma, beta) selected by `param_index(group)`.
template <typename ParamIndex>
void normalization_backward(Node& self, std::size_t n, std::size_t groups, real eps, ParamIndex param_index,
                            bool per_element_params) {
    Node& nx = in(self, 0);
    Node& ng = in(self, 1);
    Node& nb = in(self, 2);
    real* gx = nx.requires_grad ? grad_buffer(nx).data().data() : nullptr;
    real* gg = ng.requires_grad ? grad_buffer(ng).data().data() : nullptr;
    real* gb = nb.requires_grad ? grad_buffer(nb).data().data() : nullptr;
    std::vector<double> xhat(n), dxhat(n);
    for (std::size_t grp = 0; grp < groups; ++grp) {
        const real* x = nx.value.data().data() + grp * n;
        const real* dy = self.grad.data().data() + grp * n;
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += x[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t p = per_element_params ? i : param_index(grp);
            xhat[i] = (x[i] - mu) * inv;
            dxhat[i] = static_cast<double>(dy[i]) * ng.value[p];
            sum_dxhat += dxhat[i];
            sum_dxhat_xhat += dxhat[i] * xhat[i];
            if (gg) gg[p] += static_cast<real>(dy[i] * xhat[i]);
            if (gb) gb[p] += dy[i];
        }
        if (gx) {
            const double nn = static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                gx[grp * n + i] +=
                    static_cast<real>(inv / nn * (nn * dxhat[i] - sum_dxhat - xhat[i] * sum_dxhat_xhat));
            }
        }
    }
}

}  // namespace

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, real eps) {
    Tensor y = vsr::layer_norm(x.value(), gamma.value(), beta.value(), eps);
    return make_op(std::move(y), {x, gamma, beta},
                   [eps](Node& self) {
                       const Tensor& xv = in(self, 0).value;
                       normalization_backward(self, xv.cols(), xv.rows(), eps, [](std::size_t) { return 0; }, true);
                   },
                   "layer_norm");
}

Var instance_norm_frame(const Var& x, const Var& gamma, const Var& beta, real eps) {
    Tensor y = vsr::instance_norm_frame(x.value(), gamma.value(), beta.value(), eps);
    return make_op(std::move(y), {x, gamma, beta},
                   [eps](Node& self) {
                       const Tensor& xv = in(self, 0).value;
                       const std::size_t t = xv.dim(1);
                       const std::size_t hw = xv.dim(2) * xv.dim(3);
                       normalization_backward(self, hw, xv.dim(0) * t, eps,
                                              [t](std::size_t grp) { return grp / t; }, false);
                   },
                   "instance_norm_frame");
}

Var softmax(const Var& x) {
    Tensor y = vsr::softmax(x.value());
    return make_op(std::move(y), {x},
                   [](Node& self) {
                       Tensor& gx = grad_buffer(in(self, 0));
                       const std::size_t v = self.value.cols();
                       for (std::size_t r = 0; r < self.value.rows(); ++r) {
                           const real* yr = self.value.data().data() + r * v;
                           const real* dy = self.grad.data().data() + r * v;
                           double dot = 0.0;
                           for (std::size_t i = 0; i < v; ++i) dot += static_cast<double>(dy[i]) * yr[i];
                           for (std::size_t i = 0; i < v; ++i) gx[r * v + i] += static_cast<real>(yr[i] * (dy[i] - dot));
                       }
                   },
                   "softmax");
}

Var log_softmax(const Var& x) {
    Tensor y = vsr::log_softmax(x.value());
    return make_op(std::move(y), {x},
                   [](Node& self) {
                       Tensor& gx = grad_buffer(in(self, 0));
                       const std::size_t v = self.value.cols();
                       for (std::size_t r = 0; r < self.value.rows(); ++r) {
                           const real* yr = self.value.data().data() + r * v;
                           const real* dy = self.grad.data().data() + r * v;
                           double total = 0.0;
                           for (std::size_t i = 0; i < v; ++i) total += dy[i];
                           for (std::size_t i = 0; i < v; ++i) {
                               gx[r * v + i] += static_cast<real>(dy[i] - std::exp(static_cast<double>(yr[i])) * total);
                           }
                       }
                   },
                   "log_softmax");
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, const AttentionMask* mask) {
    Tensor y = scaled_dot_attention(q.value(), k.value(), v.value(), heads, mask);
    std::shared_ptr<AttentionMask> saved = mask ? std::make_shared<AttentionMask>(*mask) : nullptr;
    return make_op(std::move(y), {q, k, v},
                   [heads, saved](Node& self) {
                       Node& nq = in(self, 0);
                       Node& nk = in(self, 1);
                       Node& nv = in(self, 2);
                       const std::size_t tq = nq.value.dim(0), tk = nk.value.dim(0), d = nq.value.dim(1);
                       const std::size_t dh = d / heads;
                       const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
                       real* gq = nq.requires_grad ? grad_buffer(nq).data().data() : nullptr;
                       real* gk = nk.requires_grad ? grad_buffer(nk).data().data() : nullptr;
                       real* gv = nv.requires_grad ? grad_buffer(nv).data().data() : nullptr;
                       const real* qv = nq.value.data().data();
                       const real* kv = nk.value.data().data();
                       const real* vv = nv.value.data().data();
                       std::vector<double> p(tk), dp(tk);
                       for (std::size_t h = 0; h < heads; ++h) {
                           const std::size_t off = h * dh;
                           for (std::size_t i = 0; i < tq; ++i) {
                               double m = -INFINITY;
                               bool any = false;
                               for (std::size_t j = 0; j < tk; ++j) {
                                   if (saved && !saved->allowed(i, j)) continue;
                                   double s = 0.0;
                                   for (std::size_t c = 0; c < dh; ++c) {
                                       s += static_cast<double>(qv[i * d + off + c]) * kv[j * d + off + c];
                                   }
                                   p[j] = s * sc;
                                   m = std::max(m, p[j]);
                                   any = true;
                               }
                               if (!any) continue;
                               double z = 0.0;
                               for (std::size_t j = 0; j < tk; ++j) {
                                   if (saved && !saved->allowed(i, j)) continue;
                                   p[j] = std::exp(p[j] - m);
                                   z += p[j];
                               }
                               const real* go = self.grad.data().data() + i * d + off;
                               double pdp = 0.0;
                               for (std::size_t j = 0; j < tk; ++j) {
                                   if (saved && !saved->allowed(i, j)) continue;
                                   p[j] /= z;
                                   double acc = 0.0;
                                   for (std::size_t c = 0; c < dh; ++c) acc += static_cast<double>(go[c]) * vv[j * d + off + c];
                                   dp[j] = acc;
                                   pdp += p[j] * acc;
                               }
                               for (std::size_t j = 0; j < tk; ++j) {
                                   if (saved && !saved->allowed(i, j)) continue;
                                   const double ds = p[j] * (dp[j] - pdp) * sc;
                                   for (std::size_t c = 0; c < dh; ++c) {
                                       if (gq) gq[i * d + off + c] += static_cast<real>(ds * kv[j * d + off + c]);
                                       if (gk) gk[j * d + off + c] += static_cast<real>(ds * qv[i * d + off + c]);
                                       if (gv) gv[j * d + off + c] += static_cast<real>(p[j] * go[c]);
                                   }
                               }
                           }
                       }
                   },
                   "attention");
}

Var conv3d(const Var& x, const Var& kernel, const Var& bias, const Conv3dParams& params) {
    static const Tensor no_bias;
    Tensor y = vsr::conv3d(x.value(), kernel.value(), bias.defined() ? bias.value() : no_bias, params);
    std::vector<Var> inputs{x, kernel};
    if (bias.defined()) inputs.push_back(bias);
    return make_op(std::move(y), std::move(inputs),
                   [params](Node& self) {
                       Node& nx = in(self, 0);
                       Node& nk = in(self, 1);
                       const Tensor& xv = nx.value;
                       const Tensor& kv = nk.value;
                       const std::size_t c_in = xv.dim(0), c_out = kv.dim(0);
                       const std::size_t T = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
                       const std::size_t kT = kv.dim(2), kH = kv.dim(3), kW = kv.dim(4);
                       const std::size_t To = self.value.dim(1), Ho = self.value.dim(2), Wo = self.value.dim(3);
                       const auto [st, sh, sw] = params.stride;
                       const auto [pt, ph, pw] = params.padding;
                       std::vector<double> gx_acc(nx.requires_grad ? xv.numel() : 0, 0.0);
                       real* gk = nk.requires_grad ? grad_buffer(nk).data().data() : nullptr;
                       const real* dy = self.grad.data().data();
                       const real* xd = xv.data().data();
                       const std::size_t out_plane = To * Ho * Wo, in_plane = T * H * W;
                       for (std::size_t o = 0; o < c_out; ++o) {
                           const real* dyo = dy + o * out_plane;
                           for (std::size_t ci = 0; ci < c_in; ++ci) {
                               for (std::size_t kt = 0; kt < kT; ++kt) {
                                   for (std::size_t kh = 0; kh < kH; ++kh) {
                                       for (std::size_t kw = 0; kw < kW; ++kw) {
                                           const std::size_t kidx = (((o * c_in + ci) * kT + kt) * kH + kh) * kW + kw;
                                           const double wv = kv[kidx];
                                           double gsum = 0.0;
                                           const auto [t_lo, t_hi] = detail::conv_valid_range(To, T, st, kt, pt);
                                           const auto [h_lo, h_hi] = detail::conv_valid_range(Ho, H, sh, kh, ph);
                                           const auto [w_lo, w_hi] = detail::conv_valid_range(Wo, W, sw, kw, pw);
                                           for (std::size_t t = t_lo; t < t_hi; ++t) {
                                               const std::size_t it = t * st + kt - pt;
                                               for (std::size_t h = h_lo; h < h_hi; ++h) {
                                                   const std::size_t ih = h * sh + kh - ph;
                                                   const std::size_t xrow = ci * in_plane + (it * H + ih) * W;
                                                   const real* g = dyo + (t * Ho + h) * Wo;
                                                   const real* xs = xd + xrow;
                                                   if (sw == 1) {
                                                       const std::size_t shift = kw - pw;  // may wrap; w + shift is always in range
                                                       for (std::size_t w = w_lo; w < w_hi; ++w) {
                                                           gsum += static_cast<double>(g[w]) * xs[w + shift];
                                                       }
                                                       if (!gx_acc.empty()) {
                                                           double* ga = gx_acc.data() + xrow;
                                                           for (std::size_t w = w_lo; w < w_hi; ++w) ga[w + shift] += g[w] * wv;
                                                       }
                                                   } else {
                                                       for (std::size_t w = w_lo; w < w_hi; ++w) {
                                                           const std::size_t xi = xrow + w * sw + kw - pw;
                                                           gsum += static_cast<double>(g[w]) * xd[xi];
                                                           if (!gx_acc.empty()) gx_acc[xi] += g[w] * wv;
                                                       }
                                                   }
                                               }
                                           }
                                           if (gk) gk[kidx] += static_cast<real>(gsum);
                                       }
                                   }
                               }
                           }
                       }
                       if (nx.requires_grad) {
                           Tensor& gx = grad_buffer(nx);
                           for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += static_cast<real>(gx_acc[i]);
                       }
                       if (self.inputs.size() > 2 && in(self, 2).requires_grad) {
                           Tensor& gb = grad_buffer(in(self, 2));
                           for (std::size_t o = 0; o < c_out; ++o) {
                               double acc = 0.0;
                               for (std::size_t i = 0; i < out_plane; ++i) acc += dy[o * out_plane + i];
                               gb[o] += static_cast<real>(acc);
                           }
                       }
                   },
                   "conv3d");
}

Var max_pool_spatial(const Var& x) {
    Tensor y = vsr::max_pool_spatial(x.value());
    return make_op(std::move(y), {x},
                   [](Node& self) {
                       Node& nx = in(self, 0);
                       Tensor& gx = grad_buffer(nx);
                       const std::size_t w = nx.value.dim(3), h = nx.value.dim(2);
                       const std::size_t ho = self.value.dim(2), wo = self.value.dim(3);
                       const std::size_t ct_count = nx.value.dim(0) * nx.value.dim(1);
                       for (std::size_t ct = 0; ct < ct_count; ++ct) {
                           const std::size_t base = ct * h * w;
                           for (std::size_t i = 0; i < ho; ++i) {
                               for (std::size_t j = 0; j < wo; ++j) {
                                   const std::size_t cand[4] = {base + 2 * i * w + 2 * j, base + 2 * i * w + 2 * j + 1,
                                                                base + (2 * i + 1) * w + 2 * j,
                                                                base + (2 * i + 1) * w + 2 * j + 1};
                                   const std::size_t yi = ct * ho * wo + i * wo + j;
                                   // Mirrors the forward's tie order: first maximal candidate wins.
                                   const real a = std::max(nx.value[cand[0]], nx.value[cand[1]]);
                                   const real b = std::max(nx.value[cand[2]], nx.value[cand[3]]);
                                   std::size_t pick;
                                   if (a >= b) {
                                       pick = nx.value[cand[0]] >= nx.value[cand[1]] ? cand[0] : cand[1];
                                   } else {
                                       pick = nx.value[cand[2]] >= nx.value[cand[3]] ? cand[2] : cand[3];
                                   }
                                   gx[pick] += self.grad[yi];
                               }
                           }
                       }
                   },
                   "max_pool_spatial");
}

Var avg_pool_spatial(const Var& x) {
    Tensor y = vsr::avg_pool_spatial(x.value());
    return make_op(std::move(y), {x},
                   [](Node& self) {
                       Node& nx = in(self, 0);
                       Tensor& gx = grad_buffer(nx);
                       const std::size_t c = nx.value.dim(0), t = nx.value.dim(1);
                       const std::size_t hw = nx.value.dim(2) * nx.value.dim(3);
                       const real inv = 1.0f / static_cast<real>(hw);
                       for (std::size_t ci = 0; ci < c; ++ci) {
                           for (std::size_t ti = 0; ti < t; ++ti) {
                               const real g = self.grad[ti * c + ci] * inv;
                               real* dst = gx.data().data() + (ci * t + ti) * hw;
                               for (std::size_t i = 0; i < hw; ++i) dst[i] += g;
                           }
                       }
                   },
                   "avg_pool_spatial");
}

Var depthwise_conv1d_time(const Var& x, const Var& weight, const Var& bias) {
    Tensor y = vsr::depthwise_conv1d_time(x.value(), weight.value(), bias.value());
    return make_op(std::move(y), {x, weight, bias},
                   [](Node& self) {
                       Node& nx = in(self, 0);
                       Node& nw = in(self, 1);
                       Node& nb = in(self, 2);
                       const std::size_t t = nx.value.dim(0), d = nx.value.dim(1), k = nw.value.dim(1);
                       const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
                       real* gx = nx.requires_grad ? grad_buffer(nx).data().data() : nullptr;
                       real* gw = nw.requires_grad ? grad_buffer(nw).data().data() : nullptr;
                       real* gb = nb.requires_grad ? grad_buffer(nb).data().data() : nullptr;
                       for (std::size_t ti = 0; ti < t; ++ti) {
                           for (std::size_t c = 0; c < d; ++c) {
                               const real g = self.grad[ti * d + c];
                               if (gb) gb[c] += g;
                               for (std::size_t j = 0; j < k; ++j) {
                                   const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ti + j) - half;
                                   if (src < 0 || src >= static_cast<std::ptrdiff_t>(t)) continue;
                                   const std::size_t xi = static_cast<std::size_t>(src) * d + c;
                                   if (gx) gx[xi] += g * nw.value[c * k + j];
                                   if (gw) gw[c * k + j] += g * nx.value[xi];
                               }
                           }
                       }
                   },
                   "depthwise_conv1d_time");
}

Var embedding(std::span<const int> ids, const Var& table) {
    Tensor y = vsr::embedding(ids, table.value());
    std::vector<int> saved(ids.begin(), ids.end());
    return make_op(std::move(y), {table},
                   [saved = std::move(saved)](Node& self) {
                       Tensor& g = grad_buffer(in(self, 0));
                       const std::size_t d = self.value.cols();
                       for (std::size_t i = 0; i < saved.size(); ++i) {
                           real* dst = g.data().data() + static_cast<std::size_t>(saved[i]) * d;
                           for (std::size_t c = 0; c < d; ++c) dst[c] += self.grad[i * d + c];
                       }
                   },
                   "embedding");
}

Var concat_last(const Var& a, const Var& b) {
    const std::size_t da = a.value().cols(), db = b.value().cols();
    if (a.value().rows() != b.value().rows() || a.value().rank() != b.value().rank()) {
        throw DimensionError("concat: leading shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                             " differ");
    }
    Shape s = a.shape();
    s.back() = da + db;
    Tensor y(s);
    for (std::size_t r = 0; r < a.value().rows(); ++r) {
        std::copy_n(a.value().data().data() + r * da, da, y.data().data() + r * (da + db));
        std::copy_n(b.value().data().data() + r * db, db, y.data().data() + r * (da + db) + da);
    }
    return make_op(std::move(y), {a, b},
                   [da, db](Node& self) {
                       const std::size_t rows = self.value.rows();
                       for (std::size_t k = 0; k < 2; ++k) {
                           Node& n = in(self, k);
                           if (!n.requires_grad) continue;
                           Tensor& g = grad_buffer(n);
                           const std::size_t width = k == 0 ? da : db;
                           const std::size_t off = k == 0 ? 0 : da;
                           for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < width; ++c) g[r * width + c] += self.grad[r * (da + db) + off + c];
                           }
                       }
                   },
                   "concat_last");
}

Var slice_last(const Var& x, std::size_t start, std::size_t length) {
    const std::size_t d = x.value().cols();
    if (length == 0 || start + length > d) {
        throw DimensionError("slice: range [" + std::to_string(start) + "," + std::to_string(start + length) +
                             ") exceeds last axis " + std::to_string(d));
    }
    Shape s = x.shape();
    s.back() = length;
    Tensor y(s);
    for (std::size_t r = 0; r < x.value().rows(); ++r) {
        std::copy_n(x.value().data().data() + r * d + start, length, y.data().data() + r * length);
    }
    return make_op(std::move(y), {x},
                   [start, length, d](Node& self) {
                       Tensor& g = grad_buffer(in(self, 0));
                       for (std::size_t r = 0; r < self.value.rows(); ++r) {
                           for (std::size_t c = 0; c < length; ++c) g[r * d + start + c] += self.grad[r * length + c];
                       }
                   },
                   "slice_last");
}

}  // namespace vsr::ad
