#pragma once

// Minimal reverse-mode differentiation over NCHW tensors.
//
// A Var is a shared handle to a graph node. Ops record a backward closure
// only when at least one input requires a gradient and recording is
// enabled, so inference under NoGradGuard builds no graph.

#include <functional>
#include <memory>
#include <vector>

#include "slbr/tensor.hpp"

namespace slbr {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad, accumulates into inputs[i]->grad.
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Zero tensor of value's shape when nothing has flowed back yet.
  Tensor grad() const;
  void zero_grad();

  // Value of a 1x1x1x1 tensor.
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an op result. `backward` is dropped when no input needs a gradient
// or recording is disabled.
Var make_op_result(Tensor value, std::vector<Var> inputs,
                   std::function<void(Node&)> backward);

// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
void backward(const Var& root);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace slbr
