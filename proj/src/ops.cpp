#include "vsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "vsr/error.hpp"

namespace vsr {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                             shape_str(t.shape()));
    }
}

void require_vector(const Tensor& t, std::size_t n, const char* op, const char* what) {
    if (t.rank() != 1 || t.dim(0) != n) {
        throw DimensionError(std::string(op) + ": " + what + " must have shape [" + std::to_string(n) + "], got " +
                             shape_str(t.shape()));
    }
}

}  // namespace

namespace detail {

std::pair<std::size_t, std::size_t> conv_valid_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t k,
                                                std::size_t pad) {
    std::size_t lo = 0;
    if (k < pad) lo = (pad - k + stride - 1) / stride;
    if (in + pad <= k) return {0, 0};
    std::size_t hi = (in - 1 + pad - k) / stride + 1;
    hi = std::min(hi, out);
    if (lo > hi) lo = hi;
    return {lo, hi};
}

}  // namespace detail

namespace {

template <typename F>
Tensor map_unary(const Tensor& x, F f) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = static_cast<real>(f(static_cast<double>(x[i])));
    return y;
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv3dParams& params) {
    require_rank(input, 4, "conv3d", "input");
    require_rank(kernel, 5, "conv3d", "kernel");
    const std::size_t c_in = input.dim(0);
    const std::size_t c_out = kernel.dim(0);
    if (kernel.dim(1) != c_in) {
        throw DimensionError("conv3d: channel axis mismatch, input has " + std::to_string(c_in) +
                             " channels but kernel expects " + std::to_string(kernel.dim(1)));
    }
    if (!bias.empty()) require_vector(bias, c_out, "conv3d", "bias");
    static constexpr const char* axis_names[3] = {"T", "H", "W"};
    std::array<std::size_t, 3> in{}, ks{}, out{};
    for (int a = 0; a < 3; ++a) {
        in[a] = input.dim(a + 1);
        ks[a] = kernel.dim(a + 2);
        if (params.stride[a] == 0) throw ConfigError(std::string("conv3d: stride on axis ") + axis_names[a] + " is 0");
        const std::size_t padded = in[a] + 2 * params.padding[a];
        if (ks[a] > padded) {
            throw DimensionError(std::string("conv3d: kernel size ") + std::to_string(ks[a]) + " exceeds padded input " +
                                 std::to_string(padded) + " on axis " + axis_names[a]);
        }
        out[a] = (padded - ks[a]) / params.stride[a] + 1;
    }
    const auto [st, sh, sw] = params.stride;
    const auto [pt, ph, pw] = params.padding;
    const std::size_t plane = out[0] * out[1] * out[2];
    Tensor y({c_out, out[0], out[1], out[2]});
    std::vector<double> acc(plane);
    const real* x = input.data().data();
    const real* k = kernel.data().data();
    const std::size_t in_plane = in[0] * in[1] * in[2];

    for (std::size_t o = 0; o < c_out; ++o) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            const real* xc = x + ci * in_plane;
            for (std::size_t kt = 0; kt < ks[0]; ++kt) {
                const auto [t_lo, t_hi] = detail::conv_valid_range(out[0], in[0], st, kt, pt);
                for (std::size_t kh = 0; kh < ks[1]; ++kh) {
                    const auto [h_lo, h_hi] = detail::conv_valid_range(out[1], in[1], sh, kh, ph);
                    for (std::size_t kw = 0; kw < ks[2]; ++kw) {
                        const auto [w_lo, w_hi] = detail::conv_valid_range(out[2], in[2], sw, kw, pw);
                        const double wv = k[(((o * c_in + ci) * ks[0] + kt) * ks[1] + kh) * ks[2] + kw];
                        for (std::size_t t = t_lo; t < t_hi; ++t) {
                            const std::size_t it = t * st + kt - pt;
                            for (std::size_t h = h_lo; h < h_hi; ++h) {
                                const std::size_t ih = h * sh + kh - ph;
                                const real* xrow = xc + (it * in[1] + ih) * in[2];
                                double* arow = acc.data() + (t * out[1] + h) * out[2];
                                if (sw == 1) {
                                    const real* xs = xrow + kw - pw;
                                    for (std::size_t w = w_lo; w < w_hi; ++w) arow[w] += static_cast<double>(xs[w]) * wv;
                                } else {
                                    for (std::size_t w = w_lo; w < w_hi; ++w) {
                                        arow[w] += static_cast<double>(xrow[w * sw + kw - pw]) * wv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        const double b = bias.empty() ? 0.0 : static_cast<double>(bias[o]);
        real* yo = y.data().data() + o * plane;
        for (std::size_t i = 0; i < plane; ++i) yo[i] = static_cast<real>(acc[i] + b);
    }
    require_finite(y, "conv3d");
    return y;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require_rank(weight, 2, "linear", "weight");
    const std::size_t d_out = weight.dim(0);
    const std::size_t d_in = weight.dim(1);
    if (input.cols() != d_in) {
        throw DimensionError("linear: last axis of input is " + std::to_string(input.cols()) + ", weight expects " +
                             std::to_string(d_in));
    }
    if (!bias.empty()) require_vector(bias, d_out, "linear", "bias");
    Shape out_shape = input.shape();
    out_shape.back() = d_out;
    Tensor y(out_shape);
    const std::size_t rows = input.rows();
    const real* w = weight.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const real* xr = input.data().data() + r * d_in;
        real* yr = y.data().data() + r * d_out;
        for (std::size_t j = 0; j < d_out; ++j) {
            const real* wj = w + j * d_in;
            double acc = 0.0;
            for (std::size_t i = 0; i < d_in; ++i) acc += static_cast<double>(xr[i]) * static_cast<double>(wj[i]);
            yr[j] = static_cast<real>(bias.empty() ? acc : acc + static_cast<double>(bias[j]));
        }
    }
    require_finite(y, "linear");
    return y;
}

Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, real eps) {
    const std::size_t d = input.cols();
    require_vector(gamma, d, "layer_norm", "gamma");
    require_vector(beta, d, "layer_norm", "beta");
    if (!(eps > 0.0f)) throw ConfigError("layer_norm: eps must be positive");
    Tensor y(input.shape());
    for (std::size_t r = 0; r < input.rows(); ++r) {
        const real* xr = input.data().data() + r * d;
        real* yr = y.data().data() + r * d;
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) mean += xr[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double c = xr[i] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        for (std::size_t i = 0; i < d; ++i) {
            yr[i] = static_cast<real>((xr[i] - mean) * inv * gamma[i] + beta[i]);
        }
    }
    require_finite(y, "layer_norm");
    return y;
}

Tensor softmax(const Tensor& logits) {
    const std::size_t v = logits.cols();
    Tensor y(logits.shape());
    std::vector<double> e(v);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const real* xr = logits.data().data() + r * v;
        real* yr = y.data().data() + r * v;
        const double m = *std::max_element(xr, xr + v);
        double sum = 0.0;
        for (std::size_t i = 0; i < v; ++i) {
            e[i] = std::exp(static_cast<double>(xr[i]) - m);
            sum += e[i];
        }
        for (std::size_t i = 0; i < v; ++i) yr[i] = static_cast<real>(e[i] / sum);
    }
    require_finite(y, "softmax");
    return y;
}

Tensor log_softmax(const Tensor& logits) {
    const std::size_t v = logits.cols();
    Tensor y(logits.shape());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const real* xr = logits.data().data() + r * v;
        real* yr = y.data().data() + r * v;
        const double m = *std::max_element(xr, xr + v);
        double sum = 0.0;
        for (std::size_t i = 0; i < v; ++i) sum += std::exp(static_cast<double>(xr[i]) - m);
        const double lse = m + std::log(sum);
        for (std::size_t i = 0; i < v; ++i) yr[i] = static_cast<real>(static_cast<double>(xr[i]) - lse);
    }
    require_finite(y, "log_softmax");
    return y;
}

Tensor relu(const Tensor& x) {
    return map_unary(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor gelu(const Tensor& x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    return map_unary(x, [c](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v))); });
}

Tensor swish(const Tensor& x) {
    return map_unary(x, [](double v) { return v / (1.0 + std::exp(-v)); });
}

Tensor sigmoid(const Tensor& x) {
    return map_unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

AttentionMask AttentionMask::causal(std::size_t t) {
    AttentionMask m(t, t, false);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
    }
    return m;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const AttentionMask* mask) {
    require_rank(q, 2, "attention", "q");
    require_rank(k, 2, "attention", "k");
    require_rank(v, 2, "attention", "v");
    const std::size_t tq = q.dim(0);
    const std::size_t tk = k.dim(0);
    const std::size_t d = q.dim(1);
    if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != tk) {
        throw DimensionError("attention: q/k/v shapes " + shape_str(q.shape()) + " " + shape_str(k.shape()) + " " +
                             shape_str(v.shape()) + " are inconsistent");
    }
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("attention: model dim " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                          " heads");
    }
    if (mask && (mask->queries() != tq || mask->keys() != tk)) {
        throw DimensionError("attention: mask shape does not match queries x keys");
    }
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor out({tq, d});
    std::vector<double> p(tk);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < tq; ++i) {
            const real* qi = q.data().data() + i * d + off;
            double m = -std::numeric_limits<double>::infinity();
            bool any = false;
            for (std::size_t j = 0; j < tk; ++j) {
                if (mask && !mask->allowed(i, j)) continue;
                const real* kj = k.data().data() + j * d + off;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += static_cast<double>(qi[c]) * static_cast<double>(kj[c]);
                p[j] = s * scale;
                m = std::max(m, p[j]);
                any = true;
            }
            real* oi = out.data().data() + i * d + off;
            if (!any) continue;
            double sum = 0.0;
            for (std::size_t j = 0; j < tk; ++j) {
                if (mask && !mask->allowed(i, j)) continue;
                p[j] = std::exp(p[j] - m);
                sum += p[j];
            }
            for (std::size_t j = 0; j < tk; ++j) {
                if (mask && !mask->allowed(i, j)) continue;
                p[j] /= sum;
            }
            for (std::size_t c = 0; c < dh; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < tk; ++j) {
                    if (mask && !mask->allowed(i, j)) continue;
                    acc += p[j] * static_cast<double>(v.data()[j * d + off + c]);
                }
                oi[c] = static_cast<real>(acc);
            }
        }
    }
    require_finite(out, "attention");
    return out;
}

Tensor multi_head_attention(const Tensor& query_in, const Tensor& kv_in, const AttentionWeights& w,
                            std::size_t heads, const AttentionMask* mask) {
    const Tensor q = linear(query_in, w.wq, w.bq);
    const Tensor k = linear(kv_in, w.wk, w.bk);
    const Tensor v = linear(kv_in, w.wv, w.bv);
    return linear(scaled_dot_attention(q, k, v, heads, mask), w.wo, w.bo);
}

Tensor max_pool_spatial(const Tensor& x) {
    require_rank(x, 4, "max_pool", "input");
    const std::size_t c = x.dim(0), t = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = h / 2, wo = w / 2;
    if (ho == 0 || wo == 0) {
        throw DimensionError("max_pool: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                             " too small for 2x2 pooling");
    }
    Tensor y({c, t, ho, wo});
    for (std::size_t ct = 0; ct < c * t; ++ct) {
        const real* xs = x.data().data() + ct * h * w;
        real* ys = y.data().data() + ct * ho * wo;
        for (std::size_t i = 0; i < ho; ++i) {
            for (std::size_t j = 0; j < wo; ++j) {
                const real* p = xs + 2 * i * w + 2 * j;
                ys[i * wo + j] = std::max(std::max(p[0], p[1]), std::max(p[w], p[w + 1]));
            }
        }
    }
    return y;
}

Tensor avg_pool_spatial(const Tensor& x) {
    require_rank(x, 4, "avg_pool", "input");
    const std::size_t c = x.dim(0), t = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor y({t, c});
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ti = 0; ti < t; ++ti) {
            const real* xs = x.data().data() + (ci * t + ti) * hw;
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += xs[i];
            y[ti * c + ci] = static_cast<real>(acc / static_cast<double>(hw));
        }
    }
    return y;
}

Tensor instance_norm_frame(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    require_rank(x, 4, "instance_norm", "input");
    const std::size_t c = x.dim(0), t = x.dim(1), hw = x.dim(2) * x.dim(3);
    require_vector(gamma, c, "instance_norm", "gamma");
    require_vector(beta, c, "instance_norm", "beta");
    Tensor y(x.shape());
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ti = 0; ti < t; ++ti) {
            const real* xs = x.data().data() + (ci * t + ti) * hw;
            real* ys = y.data().data() + (ci * t + ti) * hw;
            double mean = 0.0;
            for (std::size_t i = 0; i < hw; ++i) mean += xs[i];
            mean /= static_cast<double>(hw);
            double var = 0.0;
            for (std::size_t i = 0; i < hw; ++i) var += (xs[i] - mean) * (xs[i] - mean);
            var /= static_cast<double>(hw);
            const double inv = 1.0 / std::sqrt(var + eps);
            for (std::size_t i = 0; i < hw; ++i) ys[i] = static_cast<real>((xs[i] - mean) * inv * gamma[ci] + beta[ci]);
        }
    }
    require_finite(y, "instance_norm");
    return y;
}

Tensor depthwise_conv1d_time(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 2, "depthwise_conv1d", "input");
    require_rank(weight, 2, "depthwise_conv1d", "weight");
    const std::size_t t = x.dim(0), d = x.dim(1), k = weight.dim(1);
    if (weight.dim(0) != d) throw DimensionError("depthwise_conv1d: weight channels do not match input");
    if (k % 2 == 0) throw ConfigError("depthwise_conv1d: kernel size must be odd, got " + std::to_string(k));
    require_vector(bias, d, "depthwise_conv1d", "bias");
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    Tensor y({t, d});
    for (std::size_t ti = 0; ti < t; ++ti) {
        for (std::size_t c = 0; c < d; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ti) + static_cast<std::ptrdiff_t>(j) - half;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(t)) continue;
                acc += static_cast<double>(x[static_cast<std::size_t>(src) * d + c]) *
                       static_cast<double>(weight[c * k + j]);
            }
            y[ti * d + c] = static_cast<real>(acc + bias[c]);
        }
    }
    require_finite(y, "depthwise_conv1d");
    return y;
}

Tensor embedding(std::span<const int> ids, const Tensor& table) {
    require_rank(table, 2, "embedding", "table");
    if (ids.empty()) throw DimensionError("embedding: empty id sequence");
    const std::size_t v = table.dim(0), d = table.dim(1);
    Tensor y({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
            throw DimensionError("embedding: token id " + std::to_string(ids[i]) + " out of range [0," +
                                 std::to_string(v) + ")");
        }
        std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d, y.data().data() + i * d);
    }
    return y;
}

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
    Tensor pe({length, d_model});
    const double log_base = std::log(10000.0);
    for (std::size_t p = 0; p < length; ++p) {
        for (std::size_t i = 0; i < d_model; ++i) {
            const std::size_t pair = i / 2;
            const double freq = std::exp(-static_cast<double>(2 * pair) * log_base / static_cast<double>(d_model));
            const double angle = static_cast<double>(p) * freq;
            pe[p * d_model + i] = static_cast<real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return pe;
}

}  // namespace vsr
