// SPDX-License-Identifier: Apache-2.0
#include "tsed/numerics/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace tsed {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor& Node::parent_grad(std::size_t i) {
  Node& p = *parents[i];
  if (p.grad.shape() != p.value.shape() || p.grad.size() != p.value.size()) {
    p.grad = Tensor(p.value.shape(), 0.0);
  }
  return p.grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward, const char* op) {
  if (!value.all_finite()) {
    throw std::domain_error(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node());
    }
  }
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward on undefined variable");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node& root = *loss.node();
  if (root.grad.size() != 1) root.grad = Tensor(root.value.shape(), 0.0);
  root.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
  // Intermediate gradients are released; leaves keep theirs.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
}

}  // namespace tsed
