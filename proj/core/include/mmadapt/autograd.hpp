#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mmadapt/tensor.hpp"

namespace mmadapt {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. `backward` reads `grad` and accumulates into
// the gradients of `inputs`.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  // Allocates a zero gradient on first use.
  Tensor& grad_buffer();
};

// Handle to a tape node. Copies alias the same node.
class Var {
 public:
  Var() = default;

  // Trainable leaf: gradients accumulate across backward passes until zero_grad().
  static Var leaf(Tensor value);
  // Constant: never receives a gradient.
  static Var constant(Tensor value);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  // Gradient after backward(); zeros if none flowed here.
  const Tensor& grad() const { return node_->grad_buffer(); }
  void zero_grad();

  // Same value, cut from the tape.
  Var detach() const { return constant(value()); }

  const NodePtr& node() const { return node_; }

 private:
  explicit Var(NodePtr n) : node_(std::move(n)) {}
  friend Var make_op(Tensor, std::vector<Var>, std::function<void(Node&)>);
  NodePtr node_;
};

// Records an op. The backward closure is only kept when some input requires a
// gradient and grad mode is on.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// Seeds d(loss)/d(loss) = 1 and propagates through the tape in reverse topological order.
void backward(const Var& loss);

bool grad_enabled();

// Disables tape recording on this thread for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// A named trainable tensor.
struct Parameter {
  std::string name;
  Var var;
};

}  // namespace mmadapt
