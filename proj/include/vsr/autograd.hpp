#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a handle to a tape node. Nodes created from inputs that do not
// require gradients keep no history, so the same model code runs for
// inference (constants only) and training (parameters as leaves).

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "vsr/ops.hpp"
#include "vsr/tensor.hpp"

namespace vsr::ad {

struct Node {
    Tensor value;
    Tensor grad;  // empty until something flows into it
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into inputs' grads.
    std::function<void(Node&)> backward;
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Tensor& grad() const { return node_->grad; }
    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);

// Records an op result. If no input requires a gradient the history is dropped.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward, const char* name);

// Adds g into the gradient of n (allocating zeros on first use).
void accumulate(Node& n, const Tensor& g);
Tensor& grad_buffer(Node& n);

// Runs reverse accumulation from a scalar loss (shape [1]).
void backward(const Var& loss);

// Reverse accumulation from a non-scalar root seeded with d(objective)/d(root).
void backward(const Var& root, const Tensor& seed);

// backward(loss) followed by a gradient read-out; unreached params get zeros.
std::vector<Tensor> gradients(const Var& loss, std::span<const Var> params);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real s);
Var sum(const Var& a);
Var mean(const Var& a);

Var relu(const Var& x);
Var gelu(const Var& x);
Var swish(const Var& x);
Var sigmoid(const Var& x);

// bias may be an undefined Var.
Var linear(const Var& x, const Var& weight, const Var& bias);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, real eps);
Var softmax(const Var& x);
Var log_softmax(const Var& x);
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, const AttentionMask* mask = nullptr);

Var conv3d(const Var& x, const Var& kernel, const Var& bias, const Conv3dParams& params = {});
Var max_pool_spatial(const Var& x);
Var avg_pool_spatial(const Var& x);
Var instance_norm_frame(const Var& x, const Var& gamma, const Var& beta, real eps);
Var depthwise_conv1d_time(const Var& x, const Var& weight, const Var& bias);
Var embedding(std::span<const int> ids, const Var& table);

Var concat_last(const Var& a, const Var& b);
Var slice_last(const Var& x, std::size_t start, std::size_t length);

}  // namespace vsr::ad
