#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "awdlab/tensor.hpp"

namespace awdlab {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// Reverse-mode autodiff tape. Operations are recorded in order; backward
// replays their rules in exact reverse order. Values are immutable once
// recorded.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = true);

  Var matmul(Var a, Var b);
  // x: N x F (or N x F x H x W), bias: F. Adds bias along dimension 1.
  Var add_bias(Var x, Var bias);
  Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding);
  Var relu(Var x);
  // Collapses every dimension after the first.
  Var flatten(Var x);
  Var add(Var a, Var b);
  Var scale(Var x, double factor);
  // Mean over the batch of -log softmax(logits)[label]; returns a 1-element value.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);

  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  // Empty until backward has reached this node.
  std::span<const double> grad(Var v) const { return nodes_.at(v.id).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  std::size_t size() const { return nodes_.size(); }
  // Node ids in the order backward visited them (last backward call).
  const std::vector<std::size_t>& backward_order() const { return backward_order_; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&, std::size_t)> rule);
  std::vector<double>& grad_buffer(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
};

// Plain forward kernels shared by the tape and by gradient-free callers.
Tensor matmul_forward(const Tensor& a, const Tensor& b);
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);

}  // namespace awdlab
