#pragma once

// Desk-scale trainer for the assembled recognizer: Adam with a warmup /
// inverse-square-root schedule, global-norm clipping, per-sample gradients
// reduced in a fixed order.

#include <functional>
#include <string>
#include <vector>

#include "vsr/model.hpp"

namespace vsr {

struct OptimizerConfig {
    double peak_lr = 3e-3;
    std::size_t warmup_steps = 50;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double epsilon = 1e-9;
    double clip_norm = 5.0;

    void validate() const;
    // peak_lr * min(step / warmup, sqrt(warmup / step)) for step >= 1.
    double learning_rate(std::size_t step) const;
};

struct TrainConfig {
    std::size_t steps = 500;
    std::size_t batch_size = 4;
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    OptimizerConfig optimizer;
    JointLossConfig loss;

    void validate() const;
};

struct TrainSample {
    std::string id;
    Tensor input;             // [C,T,N,N]
    std::vector<int> tokens;  // transcript ids, no sos/eos
};

struct LossRecord {
    std::size_t step = 0;
    double ctc = 0.0;
    double ce = 0.0;
    double joint = 0.0;
};

struct TrainResult {
    ParamMap params;
    std::vector<LossRecord> curve;
    std::size_t skipped = 0;  // samples dropped for an infeasible CTC alignment
};

// Adam state over a parameter map.
class Adam {
public:
    explicit Adam(OptimizerConfig config) : config_(config) {}
    // Applies one update with learning rate config.learning_rate(step).
    void step(ParamMap& params, const ParamMap& grads, std::size_t step);

private:
    OptimizerConfig config_;
    ParamMap m_;
    ParamMap v_;
};

// Scales grads in place so their joint L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(ParamMap& grads, double max_norm);

// Each step draws batch_size samples (shuffled epochs from the seed), sums the
// per-sample gradients in utterance-id order and averages over the kept samples. The
// encoder-decoder and the language model ("lm.*") are clipped separately.
// A non-finite loss or gradient throws NumericError naming the step.
TrainResult train_toy(const ModelConfig& model, const std::vector<TrainSample>& data, const TrainConfig& config,
                      ParamMap init, const std::function<void(const LossRecord&)>& on_step = {});

// Lines "step<TAB>ctc<TAB>ce<TAB>joint".
std::string format_loss_curve(const std::vector<LossRecord>& curve);

}  // namespace vsr
