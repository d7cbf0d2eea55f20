#include "vsr/losses.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vsr/error.hpp"

namespace vsr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_log_probs(const Tensor& lp, const char* what) {
    if (lp.rank() != 2 || lp.dim(0) == 0 || lp.dim(1) == 0)
        throw DimensionError(std::string(what) + ": expected log-probs [T,V], got " + shape_str(lp.shape()));
}

struct CtcLattice {
    std::vector<int> ext;                   // blank-interleaved label
    std::vector<std::vector<double>> alpha; // [T][S]
    std::vector<std::vector<double>> beta;  // [T][S]
    double log_total = kNegInf;
};

CtcLattice ctc_lattice(const Tensor& lp, std::span<const int> label, int blank, bool with_beta) {
    check_log_probs(lp, "ctc_loss");
    const std::size_t t_len = lp.dim(0), v = lp.dim(1);
    if (blank < 0 || static_cast<std::size_t>(blank) >= v)
        throw DataError("ctc_loss: blank id " + std::to_string(blank) + " out of range");
    CtcLattice L;
    L.ext.push_back(blank);
    for (int y : label) {
        if (y == blank) throw DataError("ctc_loss: label contains the blank id");
        if (y < 0 || static_cast<std::size_t>(y) >= v)
            throw DataError("ctc_loss: label id " + std::to_string(y) + " out of range [0," + std::to_string(v) + ")");
        L.ext.push_back(y);
        L.ext.push_back(blank);
    }
    const std::size_t s_len = L.ext.size();
    auto emit = [&](std::size_t t, std::size_t s) { return static_cast<double>(lp[t * v + L.ext[s]]); };
    auto skip_ok = [&](std::size_t s) { return s >= 2 && L.ext[s] != blank && L.ext[s] != L.ext[s - 2]; };

    L.alpha.assign(t_len, std::vector<double>(s_len, kNegInf));
    L.alpha[0][0] = emit(0, 0);
    if (s_len > 1) L.alpha[0][1] = emit(0, 1);
    for (std::size_t t = 1; t < t_len; ++t)
        for (std::size_t s = 0; s < s_len; ++s) {
            double a = L.alpha[t - 1][s];
            if (s >= 1) a = log_add(a, L.alpha[t - 1][s - 1]);
            if (skip_ok(s)) a = log_add(a, L.alpha[t - 1][s - 2]);
            L.alpha[t][s] = a == kNegInf ? kNegInf : a + emit(t, s);
        }
    L.log_total = L.alpha[t_len - 1][s_len - 1];
    if (s_len > 1) L.log_total = log_add(L.log_total, L.alpha[t_len - 1][s_len - 2]);
    if (!with_beta || L.log_total == kNegInf) return L;

    L.beta.assign(t_len, std::vector<double>(s_len, kNegInf));
    L.beta[t_len - 1][s_len - 1] = emit(t_len - 1, s_len - 1);
    if (s_len > 1) L.beta[t_len - 1][s_len - 2] = emit(t_len - 1, s_len - 2);
    for (std::size_t t = t_len - 1; t-- > 0;)
        for (std::size_t s = 0; s < s_len; ++s) {
            double b = L.beta[t + 1][s];
            if (s + 1 < s_len) b = log_add(b, L.beta[t + 1][s + 1]);
            if (s + 2 < s_len && skip_ok(s + 2)) b = log_add(b, L.beta[t + 1][s + 2]);
            L.beta[t][s] = b == kNegInf ? kNegInf : b + emit(t, s);
        }
    return L;
}

std::vector<double> smoothed_weights(std::size_t v, int target, double eps) {
    std::vector<double> q(v, v > 1 ? eps / static_cast<double>(v - 1) : 0.0);
    q[static_cast<std::size_t>(target)] = 1.0 - eps;
    return q;
}

void check_ce(const Tensor& lp, std::span<const int> targets, double eps) {
    check_log_probs(lp, "ce_loss");
    if (targets.size() != lp.dim(0))
        throw DimensionError("ce_loss: " + std::to_string(targets.size()) + " targets for " + std::to_string(lp.dim(0)) +
                             " positions");
    if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("ce_loss: label smoothing must be in [0,1)");
    if (eps > 0.0 && lp.dim(1) < 2) throw ConfigError("ce_loss: label smoothing needs at least two classes");
    for (int y : targets)
        if (y < 0 || static_cast<std::size_t>(y) >= lp.dim(1))
            throw DataError("ce_loss: target id " + std::to_string(y) + " out of range");
}

}  // namespace

double ctc_loss_value(const Tensor& log_probs, std::span<const int> label, int blank) {
    const CtcLattice L = ctc_lattice(log_probs, label, blank, false);
    return L.log_total == kNegInf ? std::numeric_limits<double>::infinity() : -L.log_total;
}

ad::Var ctc_loss(const ad::Var& log_probs, std::span<const int> label, int blank) {
    auto lattice = std::make_shared<CtcLattice>(ctc_lattice(log_probs.value(), label, blank, log_probs.requires_grad()));
    if (lattice->log_total == kNegInf) return ad::constant(Tensor::scalar(std::numeric_limits<real>::infinity()));
    const real value = static_cast<real>(-lattice->log_total);
    return ad::make_op(Tensor::scalar(value), {log_probs},
                       [lattice](ad::Node& self) {
                           ad::Node& in = *self.inputs[0];
                           Tensor& g = ad::grad_buffer(in);
                           const std::size_t v = in.value.dim(1);
                           const double up = self.grad[0];
                           const CtcLattice& L = *lattice;
                           for (std::size_t t = 0; t < L.alpha.size(); ++t)
                               for (std::size_t s = 0; s < L.ext.size(); ++s) {
                                   const double a = L.alpha[t][s], b = L.beta[t][s];
                                   if (a == kNegInf || b == kNegInf) continue;
                                   const std::size_t k = static_cast<std::size_t>(L.ext[s]);
                                   const double occupancy =
                                       std::exp(a + b - static_cast<double>(in.value[t * v + k]) - L.log_total);
                                   g[t * v + k] -= static_cast<real>(up * occupancy);
                               }
                       },
                       "ctc_loss");
}

double ce_loss_value(const Tensor& log_probs, std::span<const int> targets, double smoothing) {
    check_ce(log_probs, targets, smoothing);
    const std::size_t l = log_probs.dim(0), v = log_probs.dim(1);
    double total = 0.0;
    for (std::size_t t = 0; t < l; ++t) {
        const auto q = smoothed_weights(v, targets[t], smoothing);
        for (std::size_t k = 0; k < v; ++k)
            if (q[k] != 0.0) total -= q[k] * static_cast<double>(log_probs[t * v + k]);
    }
    return total / static_cast<double>(l);
}

ad::Var ce_loss(const ad::Var& log_probs, std::span<const int> targets, double smoothing) {
    const real value = static_cast<real>(ce_loss_value(log_probs.value(), targets, smoothing));
    std::vector<int> ys(targets.begin(), targets.end());
    return ad::make_op(Tensor::scalar(value), {log_probs},
                       [ys = std::move(ys), smoothing](ad::Node& self) {
                           ad::Node& in = *self.inputs[0];
                           Tensor& g = ad::grad_buffer(in);
                           const std::size_t l = in.value.dim(0), v = in.value.dim(1);
                           const double up = self.grad[0] / static_cast<double>(l);
                           for (std::size_t t = 0; t < l; ++t) {
                               const auto q = smoothed_weights(v, ys[t], smoothing);
                               for (std::size_t k = 0; k < v; ++k) g[t * v + k] -= static_cast<real>(up * q[k]);
                           }
                       },
                       "ce_loss");
}

void JointLossConfig::validate() const {
    if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0)) throw ConfigError("ctc_weight must be in [0,1]");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must be in [0,1)");
}

ad::Var combine_losses(const ad::Var& ctc, const ad::Var& ce, double ctc_weight) {
    if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0)) throw ConfigError("ctc_weight must be in [0,1]");
    if (ctc_weight == 0.0) return ce;
    if (ctc_weight == 1.0) return ctc;
    const double mixed = ctc_weight * static_cast<double>(ctc.value()[0]) +
                         (1.0 - ctc_weight) * static_cast<double>(ce.value()[0]);
    return ad::make_op(Tensor::scalar(static_cast<real>(mixed)), {ctc, ce},
                       [ctc_weight](ad::Node& self) {
                           const double up = self.grad[0];
                           if (self.inputs[0]->requires_grad)
                               ad::grad_buffer(*self.inputs[0])[0] += static_cast<real>(ctc_weight * up);
                           if (self.inputs[1]->requires_grad)
                               ad::grad_buffer(*self.inputs[1])[0] += static_cast<real>((1.0 - ctc_weight) * up);
                       },
                       "combine_losses");
}

}  // namespace vsr
