#pragma once

// Sequence losses: CTC over encoder log-probabilities, label-smoothed
// cross-entropy over decoder log-probabilities, and their weighted mix.

#include <span>

#include "vsr/autograd.hpp"

namespace vsr {

// -log sum over all monotonic alignments of `label` (blank-interleaved)
// through log_probs [T,V], forward algorithm in log space. Returns +inf when
// no alignment exists (T too short). Labels must not contain blank.
double ctc_loss_value(const Tensor& log_probs, std::span<const int> label, int blank);
// Scalar [1] tape node with the same value; an infeasible instance yields
// +inf with a zero gradient.
ad::Var ctc_loss(const ad::Var& log_probs, std::span<const int> label, int blank);

// Mean over positions of -sum_k q_k log p_k with q = 1 - eps on the target
// and eps / (V - 1) on every other token.
double ce_loss_value(const Tensor& log_probs, std::span<const int> targets, double smoothing);
ad::Var ce_loss(const ad::Var& log_probs, std::span<const int> targets, double smoothing);

struct JointLossConfig {
    double ctc_weight = 0.3;
    double label_smoothing = 0.1;

    void validate() const;
};

// ctc_weight * ctc + (1 - ctc_weight) * ce; a zero-weighted term is left out
// entirely, so an infeasible CTC term does not poison a CE-only objective.
ad::Var combine_losses(const ad::Var& ctc, const ad::Var& ce, double ctc_weight);

}  // namespace vsr
