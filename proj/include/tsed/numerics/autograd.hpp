// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tsed/numerics/tensor.hpp"

namespace tsed {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One recorded operation. `backward` reads `grad` and accumulates into the
/// parents' gradients; it is empty for leaves.
struct Node {
  Tensor value;
  Tensor grad;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  const char* op = "leaf";

  /// Returns the parent's gradient buffer, allocating zeros on first use.
  Tensor& parent_grad(std::size_t i);
};

/// Handle to a node in the computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const NodePtr& node() const { return node_; }

  /// Clears the accumulated gradient (leaves the buffer empty).
  void zero_grad();

 private:
  NodePtr node_;
};

/// Records an op result. When grad recording is disabled or no parent
/// requires a gradient, the parents and closure are dropped.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward, const char* op);

/// Reverse-mode sweep from a scalar loss. Parameter gradients accumulate
/// until `zero_grad` is called on them.
void backward(const Var& loss);

bool grad_enabled();

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace tsed
