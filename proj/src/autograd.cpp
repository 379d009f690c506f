#include "slbr/autograd.hpp"

#include <unordered_set>

#include "slbr/errors.hpp"

namespace slbr {
namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape(), 0.0);
  return node_->grad;
}

void Var::zero_grad() { node_->grad = Tensor(); }

double Var::item() const {
  require(node_->value.size() == 1, "item() on non-scalar tensor " + shape().str());
  return node_->value[0];
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op_result(Tensor value, std::vector<Var> inputs,
                   std::function<void(Node&)> backward) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool needs = false;
  for (const Var& v : inputs) needs = needs || (v.defined() && v.requires_grad());
  if (!needs) return out;
  Node& node = *out.node();
  node.requires_grad = true;
  node.inputs.reserve(inputs.size());
  for (Var& v : inputs) node.inputs.push_back(v.node());
  node.backward = std::move(backward);
  return out;
}

void backward(const Var& root) {
  require(root.defined() && root.value().size() == 1, "backward() needs a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; reversed it is a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child != nullptr && child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // Interior gradients are not needed after the sweep; leaves keep theirs.
  for (Node* node : order) {
    if (node->backward) node->grad = Tensor();
  }
}

}  // namespace slbr
