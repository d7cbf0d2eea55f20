#include "vsr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "vsr/error.hpp"

namespace vsr {

void OptimizerConfig::validate() const {
    if (!(peak_lr > 0.0)) throw ConfigError("optimizer: peak_lr must be positive");
    if (warmup_steps == 0) throw ConfigError("optimizer: warmup_steps must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer: betas must be in [0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be positive");
    if (!(clip_norm > 0.0)) throw ConfigError("optimizer: clip_norm must be positive");
}

double OptimizerConfig::learning_rate(std::size_t step) const {
    const double s = static_cast<double>(std::max<std::size_t>(step, 1));
    const double w = static_cast<double>(warmup_steps);
    return peak_lr * std::min(s / w, std::sqrt(w / s));
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (jobs == 0) throw ConfigError("train: jobs must be positive");
    optimizer.validate();
    loss.validate();
}

void Adam::step(ParamMap& params, const ParamMap& grads, std::size_t step) {
    const double lr = config_.learning_rate(step);
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step));
    for (auto& [name, p] : params) {
        const auto g = grads.find(name);
        if (g == grads.end()) continue;
        Tensor& m = m_.try_emplace(name, p.shape()).first->second;
        Tensor& v = v_.try_emplace(name, p.shape()).first->second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g->second[i];
            const double mi = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
            const double vi = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
            m[i] = static_cast<real>(mi);
            v[i] = static_cast<real>(vi);
            p[i] = static_cast<real>(p[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + config_.epsilon));
        }
    }
}

double clip_grad_norm(ParamMap& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (real x : g.data()) sq += static_cast<double>(x) * x;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& [name, g] : grads)
            for (auto& x : g.data()) x = static_cast<real>(x * s);
    }
    return norm;
}

namespace {

struct SampleResult {
    ParamMap grads;
    double ctc = 0.0, ce = 0.0, joint = 0.0;
    bool feasible = true;
};

bool is_lm(const std::string& name) { return name.rfind("lm.", 0) == 0; }

SampleResult run_sample(const ParamMap& params, const ModelConfig& model, const TrainSample& sample,
                        const TrainConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    const ForwardContext ctx{true, &rng};
    const ParamView view = ParamView::trainable(params);
    SampleResult r;
    const LossParts parts = joint_loss(view, model, sample.input, sample.tokens, config.loss, ctx);
    r.ctc = parts.ctc.value()[0];
    r.ce = parts.ce.value()[0];
    r.joint = parts.joint.value()[0];
    r.feasible = parts.ctc_feasible || config.loss.ctc_weight == 0.0;
    if (r.feasible) ad::backward(parts.joint);
    if (model.use_lm) ad::backward(lm_loss(view, model, sample.tokens, ctx));
    for (const auto& [name, var] : view.vars()) {
        const bool has = !var.grad().empty();
        if (!r.feasible && !is_lm(name)) continue;
        r.grads.emplace(name, has ? var.grad() : Tensor(var.shape()));
    }
    return r;
}

void add_into(ParamMap& acc, const ParamMap& g) {
    for (const auto& [name, t] : g) {
        auto [it, fresh] = acc.try_emplace(name, t);
        if (!fresh)
            for (std::size_t i = 0; i < t.numel(); ++i) it->second[i] += t[i];
    }
}

bool all_finite(const ParamMap& g) {
    for (const auto& [name, t] : g)
        for (real x : t.data())
            if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

TrainResult train_toy(const ModelConfig& model, const std::vector<TrainSample>& data, const TrainConfig& config,
                      ParamMap init, const std::function<void(const LossRecord&)>& on_step) {
    model.validate();
    config.validate();
    TrainResult result;
    result.params = std::move(init);
    if (config.steps == 0) return result;
    if (data.empty()) throw DataError("train: empty training set");

    Rng order_rng(config.seed);
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    auto next_index = [&] {
        if (cursor == order.size()) {
            order.resize(data.size());
            std::iota(order.begin(), order.end(), 0);
            order_rng.shuffle(order);
            cursor = 0;
        }
        return order[cursor++];
    };

    Adam adam(config.optimizer);
    for (std::size_t step = 1; step <= config.steps; ++step) {
        std::vector<std::size_t> batch(config.batch_size);
        for (auto& i : batch) i = next_index();
        std::vector<SampleResult> results(batch.size());
        std::vector<std::exception_ptr> errors(batch.size());
        auto work = [&](std::size_t k) {
            try {
                const std::uint64_t seed = config.seed * 1000003ull + step * 7919ull + k;
                results[k] = run_sample(result.params, model, data[batch[k]], config, seed);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        };
        const std::size_t jobs = std::min(config.jobs, batch.size());
        if (jobs <= 1) {
            for (std::size_t k = 0; k < batch.size(); ++k) work(k);
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < jobs; ++w)
                pool.emplace_back([&, w] {
                    for (std::size_t k = w; k < batch.size(); k += jobs) work(k);
                });
            for (auto& t : pool) t.join();
        }
        for (const auto& e : errors) {
            if (!e) continue;
            try {
                std::rethrow_exception(e);
            } catch (const NumericError& err) {
                throw NumericError("training diverged at step " + std::to_string(step) + " (" + err.what() + ")");
            }
        }

        ParamMap model_grads, lm_grads;
        LossRecord rec;
        rec.step = step;
        std::size_t kept = 0;
        std::vector<std::size_t> reduce_order(batch.size());
        std::iota(reduce_order.begin(), reduce_order.end(), 0);
        std::stable_sort(reduce_order.begin(), reduce_order.end(),
                         [&](std::size_t a, std::size_t b) { return data[batch[a]].id < data[batch[b]].id; });
        for (std::size_t k : reduce_order) {
            const SampleResult& r = results[k];
            ParamMap m, l;
            for (const auto& [name, g] : r.grads) (is_lm(name) ? l : m).emplace(name, g);
            add_into(lm_grads, l);
            if (!r.feasible) {
                ++result.skipped;
                continue;
            }
            if (!std::isfinite(r.joint))
                throw NumericError("training diverged at step " + std::to_string(step) + " (non-finite loss)");
            add_into(model_grads, m);
            rec.ctc += r.ctc;
            rec.ce += r.ce;
            rec.joint += r.joint;
            ++kept;
        }
        if (kept > 0) {
            rec.ctc /= static_cast<double>(kept);
            rec.ce /= static_cast<double>(kept);
            rec.joint /= static_cast<double>(kept);
            for (auto& [name, g] : model_grads)
                for (auto& x : g.data()) x = static_cast<real>(x / static_cast<double>(kept));
        } else {
            rec.ctc = rec.ce = rec.joint = std::nan("");
        }
        for (auto& [name, g] : lm_grads)
            for (auto& x : g.data()) x = static_cast<real>(x / static_cast<double>(batch.size()));
        if (!all_finite(model_grads) || !all_finite(lm_grads))
            throw NumericError("training diverged at step " + std::to_string(step) + " (non-finite gradient)");
        clip_grad_norm(model_grads, config.optimizer.clip_norm);
        clip_grad_norm(lm_grads, config.optimizer.clip_norm);
        add_into(model_grads, lm_grads);
        adam.step(result.params, model_grads, step);
        result.curve.push_back(rec);
        if (on_step) on_step(rec);
    }
    return result;
}

std::string format_loss_curve(const std::vector<LossRecord>& curve) {
    std::string out;
    char buf[128];
    for (const LossRecord& r : curve) {
        std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g\n", r.step, r.ctc, r.ce, r.joint);
        out += buf;
    }
    return out;
}

}  // namespace vsr
