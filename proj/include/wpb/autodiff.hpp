#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wpb/tensor.hpp"

namespace wpb {

enum class OpKind {
  leaf,
  matmul,
  add,  // numpy-style broadcasting
  mul,  // elementwise, broadcasting
  relu,
  negate,
  scale,
  exp,
  sum,          // all elements to a scalar
  sum_last,     // last axis, kept as extent 1
  max_last,     // last axis, kept as extent 1
  log_sum_exp,  // last axis, max-shifted, kept as extent 1
};

const char* op_name(OpKind kind);

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

class GradientSet;

/// Records a computation for one reverse sweep. Nodes are appended in
/// creation order, so parents always precede children and the graph is
/// acyclic by construction. A tape belongs to a single computation; build a
/// new one per batch.
class Tape {
 public:
  Var leaf(Tensor value);

  /// Generic entry point; `factor` is only read by OpKind::scale.
  Var forward(OpKind kind, std::span<const Var> inputs, double factor = 0.0);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var relu(Var a);
  Var negate(Var a);
  Var scale(Var a, double factor);
  Var exp(Var a);
  Var sum(Var a);
  Var sum_last(Var a);
  Var max_last(Var a);
  Var log_sum_exp(Var a);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }

  /// Exact reverse-mode gradients of a single-element root. Handles that do
  /// not influence the root receive zeros.
  GradientSet backward(Var root, std::span<const Var> wrt) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> parents;
    Tensor value;
    double factor = 0.0;
  };

  Var push(OpKind kind, std::vector<std::size_t> parents, Tensor value, double factor = 0.0);
  void check(Var v) const;

  std::vector<Node> nodes_;
};

/// Gradients for the handles passed to Tape::backward, in the same order.
class GradientSet {
 public:
  GradientSet() = default;
  GradientSet(std::vector<std::size_t> ids, std::vector<Tensor> grads)
      : ids_(std::move(ids)), grads_(std::move(grads)) {}

  std::size_t size() const { return grads_.size(); }
  const Tensor& operator[](std::size_t i) const { return grads_.at(i); }
  /// Gradient for a handle by id.
  const Tensor& of(Var v) const;
  std::vector<Tensor>& tensors() { return grads_; }
  const std::vector<Tensor>& tensors() const { return grads_; }

 private:
  std::vector<std::size_t> ids_;
  std::vector<Tensor> grads_;
};

}  // namespace wpb
