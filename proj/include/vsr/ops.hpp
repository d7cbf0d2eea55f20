#pragma once

// Forward kernels over plain tensors. Reductions accumulate in double and
// round to real once per output element; the summation order of every
// kernel is fixed and documented so that loop-nest oracles can reproduce
// results bit for bit.

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "vsr/tensor.hpp"

namespace vsr {

struct Conv3dParams {
    std::array<std::size_t, 3> stride{1, 1, 1};   // T, H, W
    std::array<std::size_t, 3> padding{0, 0, 0};  // T, H, W
};

// input [C_in,T,H,W], kernel [C_out,C_in,kT,kH,kW], bias [C_out] or empty.
// out[o,t,h,w] = real( sum_{ci,kt,kh,kw} x*k  + bias[o] ), terms in that
// loop order, out-of-range (padded) taps skipped.
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv3dParams& params = {});

// input [..., D_in], weight [D_out, D_in], bias [D_out] or empty.
// out[r,j] = real( sum_k x[r,k]*w[j,k] + b[j] ).
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, real eps);
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation
Tensor swish(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Attention visibility: allowed(i, j) == true means query i may attend key j.
class AttentionMask {
public:
    AttentionMask(std::size_t queries, std::size_t keys, bool fill = true)
        : queries_(queries), keys_(keys), allow_(queries * keys, fill ? 1 : 0) {}

    // Lower-triangular visibility including the diagonal.
    static AttentionMask causal(std::size_t t);

    std::size_t queries() const { return queries_; }
    std::size_t keys() const { return keys_; }
    bool allowed(std::size_t i, std::size_t j) const { return allow_[i * keys_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { allow_[i * keys_ + j] = v ? 1 : 0; }

private:
    std::size_t queries_;
    std::size_t keys_;
    std::vector<unsigned char> allow_;
};

// Core scaled dot-product attention on already projected q [Tq,D], k,v [Tk,D].
// Per head h and query i (in double): s_j = (q_i . k_j) / sqrt(D/heads) over
// allowed j in increasing order, p = softmax(s) with max subtraction,
// out_i = sum_j p_j v_j. A query with no allowed key yields zeros.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const AttentionMask* mask = nullptr);

struct AttentionWeights {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

// Projections, per-head attention and output projection.
Tensor multi_head_attention(const Tensor& query_in, const Tensor& kv_in, const AttentionWeights& w,
                            std::size_t heads, const AttentionMask* mask = nullptr);

// x [C,T,H,W] -> [C,T,H/2,W/2], 2x2 window, stride 2, floor semantics.
Tensor max_pool_spatial(const Tensor& x);
// x [C,T,H,W] -> [T,C], mean over H and W.
Tensor avg_pool_spatial(const Tensor& x);
// Per (channel, frame) normalization over H and W, then per-channel affine.
Tensor instance_norm_frame(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps);
// x [T,D], weight [D,K] (K odd), bias [D]; zero "same" padding along time.
Tensor depthwise_conv1d_time(const Tensor& x, const Tensor& weight, const Tensor& bias);
// ids -> rows of table [V,D].
Tensor embedding(std::span<const int> ids, const Tensor& table);

namespace detail {
// Output indices [first, last) whose tap `k` lands inside an input of length
// `in` given stride and leading padding.
std::pair<std::size_t, std::size_t> conv_valid_range(std::size_t out, std::size_t in, std::size_t stride,
                                                     std::size_t k, std::size_t pad);
}  // namespace detail

// Sinusoidal absolute encoding: pe[p,2i] = sin(p / 10000^(2i/d)), pe[p,2i+1] = cos(...).
Tensor positional_encoding(std::size_t length, std::size_t d_model);

}  // namespace vsr
