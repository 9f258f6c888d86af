#include "wpb/autodiff.hpp"

#include <cmath>
#include <optional>
#include <string>

#include "wpb/error.hpp"

namespace wpb {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::relu: return "relu";
    case OpKind::negate: return "negate";
    case OpKind::scale: return "scale";
    case OpKind::exp: return "exp";
    case OpKind::sum: return "sum";
    case OpKind::sum_last: return "sum_last";
    case OpKind::max_last: return "max_last";
    case OpKind::log_sum_exp: return "log_sum_exp";
  }
  return "unknown";
}

const Tensor& GradientSet::of(Var v) const {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    if (ids_[i] == v.id) return grads_[i];
  throw ValidationError("no gradient recorded for node " + std::to_string(v.id));
}

Var Tape::push(OpKind kind, std::vector<std::size_t> parents, Tensor value, double factor) {
  nodes_.push_back(Node{kind, std::move(parents), std::move(value), factor});
  return Var{nodes_.size() - 1};
}

void Tape::check(Var v) const {
  if (v.id >= nodes_.size()) throw ValidationError("unknown tape handle " + std::to_string(v.id));
}

Var Tape::leaf(Tensor value) { return push(OpKind::leaf, {}, std::move(value)); }

Var Tape::forward(OpKind kind, std::span<const Var> inputs, double factor) {
  const std::size_t arity = [&] {
    switch (kind) {
      case OpKind::leaf: return std::size_t{0};
      case OpKind::matmul:
      case OpKind::add:
      case OpKind::mul: return std::size_t{2};
      default: return std::size_t{1};
    }
  }();
  if (kind == OpKind::leaf) throw ValidationError("use Tape::leaf to create leaves");
  if (inputs.size() != arity) {
    throw ValidationError(std::string(op_name(kind)) + " expects " + std::to_string(arity) +
                          " inputs, got " + std::to_string(inputs.size()));
  }
  for (Var v : inputs) check(v);
  const Tensor& a = nodes_[inputs[0].id].value;
  std::vector<std::size_t> parents;
  for (Var v : inputs) parents.push_back(v.id);
  switch (kind) {
    case OpKind::matmul: return push(kind, parents, ops::matmul(a, nodes_[inputs[1].id].value));
    case OpKind::add: return push(kind, parents, ops::add(a, nodes_[inputs[1].id].value));
    case OpKind::mul: return push(kind, parents, ops::mul(a, nodes_[inputs[1].id].value));
    case OpKind::relu: return push(kind, parents, ops::relu(a));
    case OpKind::negate: return push(kind, parents, ops::negate(a));
    case OpKind::scale: return push(kind, parents, ops::scale(a, factor), factor);
    case OpKind::exp: return push(kind, parents, ops::exp(a));
    case OpKind::sum: return push(kind, parents, ops::sum(a));
    case OpKind::sum_last: return push(kind, parents, ops::sum_last(a));
    case OpKind::max_last: return push(kind, parents, ops::max_last(a));
    case OpKind::log_sum_exp: return push(kind, parents, ops::log_sum_exp(a));
    case OpKind::leaf: break;
  }
  throw ValidationError("unsupported op kind");
}

Var Tape::matmul(Var a, Var b) { const Var in[] = {a, b}; return forward(OpKind::matmul, in); }
Var Tape::add(Var a, Var b) { const Var in[] = {a, b}; return forward(OpKind::add, in); }
Var Tape::sub(Var a, Var b) { return add(a, negate(b)); }
Var Tape::mul(Var a, Var b) { const Var in[] = {a, b}; return forward(OpKind::mul, in); }
Var Tape::relu(Var a) { const Var in[] = {a}; return forward(OpKind::relu, in); }
Var Tape::negate(Var a) { const Var in[] = {a}; return forward(OpKind::negate, in); }
Var Tape::scale(Var a, double f) { const Var in[] = {a}; return forward(OpKind::scale, in, f); }
Var Tape::exp(Var a) { const Var in[] = {a}; return forward(OpKind::exp, in); }
Var Tape::sum(Var a) { const Var in[] = {a}; return forward(OpKind::sum, in); }
Var Tape::sum_last(Var a) { const Var in[] = {a}; return forward(OpKind::sum_last, in); }
Var Tape::max_last(Var a) { const Var in[] = {a}; return forward(OpKind::max_last, in); }
Var Tape::log_sum_exp(Var a) { const Var in[] = {a}; return forward(OpKind::log_sum_exp, in); }

namespace {

void accumulate(std::optional<Tensor>& slot, Tensor contribution) {
  if (!slot) {
    slot = std::move(contribution);
    return;
  }
  for (std::size_t i = 0; i < slot->size(); ++i) (*slot)[i] += contribution[i];
}

// Spreads a keep-last-axis gradient back across the reduced axis, weighted by `weights`.
Tensor spread_last(const Tensor& grad, const Tensor& weights) {
  const std::size_t n = weights.shape().back();
  Tensor out(weights.shape());
  for (std::size_t r = 0; r < grad.size(); ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = grad[r] * weights[r * n + j];
  return out;
}

}  // namespace

GradientSet Tape::backward(Var root, std::span<const Var> wrt) const {
  check(root);
  const Tensor& root_value = nodes_[root.id].value;
  if (root_value.size() != 1) {
    throw ValidationError("backward needs a scalar root, got shape " + shape_string(root_value.shape()));
  }
  for (Var v : wrt) check(v);

  std::vector<std::optional<Tensor>> grads(root.id + 1);
  grads[root.id] = Tensor(root_value.shape(), 1.0);

  for (std::size_t id = root.id + 1; id-- > 0;) {
    if (!grads[id]) continue;
    const Node& node = nodes_[id];
    const Tensor& g = *grads[id];
    auto parent = [&](std::size_t k) -> const Tensor& { return nodes_[node.parents[k]].value; };
    auto send = [&](std::size_t k, Tensor contribution) {
      accumulate(grads[node.parents[k]], std::move(contribution));
    };
    switch (node.kind) {
      case OpKind::leaf:
        break;
      case OpKind::matmul:
        send(0, ops::matmul(g, ops::transpose(parent(1))));
        send(1, ops::matmul(ops::transpose(parent(0)), g));
        break;
      case OpKind::add:
        send(0, ops::reduce_to_shape(g, parent(0).shape()));
        send(1, ops::reduce_to_shape(g, parent(1).shape()));
        break;
      case OpKind::mul:
        send(0, ops::reduce_to_shape(ops::mul(g, parent(1)), parent(0).shape()));
        send(1, ops::reduce_to_shape(ops::mul(g, parent(0)), parent(1).shape()));
        break;
      case OpKind::relu: {
        Tensor d = g;
        const Tensor& x = parent(0);
        for (std::size_t i = 0; i < d.size(); ++i)
          if (!(x[i] > 0.0)) d[i] = 0.0;
        send(0, std::move(d));
        break;
      }
      case OpKind::negate:
        send(0, ops::negate(g));
        break;
      case OpKind::scale:
        send(0, ops::scale(g, node.factor));
        break;
      case OpKind::exp:
        send(0, ops::mul(g, node.value));
        break;
      case OpKind::sum:
        send(0, Tensor(parent(0).shape(), g.item()));
        break;
      case OpKind::sum_last:
        send(0, spread_last(g, Tensor(parent(0).shape(), 1.0)));
        break;
      case OpKind::max_last: {
        const Tensor& x = parent(0);
        const std::size_t n = x.shape().back();
        Tensor mask(x.shape());
        for (std::size_t r = 0; r < node.value.size(); ++r) {
          for (std::size_t j = 0; j < n; ++j) {
            if (x[r * n + j] == node.value[r]) {
              mask[r * n + j] = 1.0;
              break;
            }
          }
        }
        send(0, spread_last(g, mask));
        break;
      }
      case OpKind::log_sum_exp: {
        const Tensor& x = parent(0);
        const std::size_t n = x.shape().back();
        Tensor softmax(x.shape());
        for (std::size_t r = 0; r < node.value.size(); ++r)
          for (std::size_t j = 0; j < n; ++j)
            softmax[r * n + j] = std::exp(x[r * n + j] - node.value[r]);
        send(0, spread_last(g, softmax));
        break;
      }
    }
  }

  std::vector<std::size_t> ids;
  std::vector<Tensor> out;
  for (Var v : wrt) {
    ids.push_back(v.id);
    if (v.id < grads.size() && grads[v.id]) {
      out.push_back(*grads[v.id]);
    } else {
      out.emplace_back(nodes_[v.id].value.shape(), 0.0);
    }
  }
  return GradientSet(std::move(ids), std::move(out));
}

}  // namespace wpb
