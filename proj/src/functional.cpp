#include "wpb/functional.hpp"

#include <cmath>
#include <string>

#include "wpb/error.hpp"

namespace wpb {

namespace {

std::size_t class_count(const Tensor& logits) {
  if (logits.rank() == 0) throw ValidationError("logits must have a class axis");
  return logits.shape().back();
}

void check_label(int label, std::size_t classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw ValidationError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(classes) + " classes");
  }
}

Tensor one_hot_rows(const Shape& shape, std::span<const int> labels) {
  const std::size_t classes = shape.back();
  const std::size_t rows = shape_size(shape) / classes;
  if (labels.size() != rows) {
    throw ValidationError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                          " logit rows");
  }
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    check_label(labels[r], classes);
    out[r * classes + static_cast<std::size_t>(labels[r])] = 1.0;
  }
  return out;
}

}  // namespace

Tensor softmax_probabilities(const Tensor& logits) {
  if (logits.rank() != 1) throw ValidationError("softmax_probabilities expects a vector");
  if (logits.size() < 2) throw ValidationError("softmax needs at least 2 classes");
  return softmax_rows(logits.reshaped({1, logits.size()})).reshaped({logits.size()});
}

Tensor softmax_rows(const Tensor& logits) {
  const std::size_t c = logits.cols();
  if (c < 2) throw ValidationError("softmax needs at least 2 classes");
  const Tensor lse = ops::log_sum_exp(logits);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < logits.rows(); ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = std::exp(logits[r * c + j] - lse[r]);
  return out;
}

Var log_softmax(Tape& tape, Var logits) {
  return tape.sub(logits, tape.log_sum_exp(logits));
}

Var cross_entropy(Tape& tape, Var logits, int label) {
  const Tensor& z = tape.value(logits);
  if (z.rank() != 1) throw ValidationError("cross_entropy expects a logit vector");
  check_label(label, z.size());
  const int labels[] = {label};
  return tape.sum(cross_entropy_rows(tape, logits, labels));
}

Var cross_entropy_rows(Tape& tape, Var logits, std::span<const int> labels) {
  const Tensor& z = tape.value(logits);
  class_count(z);
  // Shifting by the (constant) row max first makes uniform logits give ln C exactly.
  // Both constants are built before any push, which may move `z`.
  Tensor row_max = ops::max_last(z);
  Tensor onehot = one_hot_rows(z.shape(), labels);
  const Var shifted = tape.sub(logits, tape.leaf(std::move(row_max)));
  const Var picked = tape.sum_last(tape.mul(shifted, tape.leaf(std::move(onehot))));
  return tape.sub(tape.log_sum_exp(shifted), picked);
}

Var kl_divergence(Tape& tape, Var p_logits, Var q_logits) {
  const Tensor& p = tape.value(p_logits);
  const Tensor& q = tape.value(q_logits);
  if (p.rank() != 1 || q.rank() != 1) throw ValidationError("kl_divergence expects logit vectors");
  if (p.size() != q.size()) {
    throw ValidationError("kl_divergence length mismatch: " + shape_string(p.shape()) + " vs " +
                          shape_string(q.shape()));
  }
  return tape.sum(kl_divergence_rows(tape, p_logits, q_logits));
}

Var kl_divergence_rows(Tape& tape, Var p_logits, Var q_logits) {
  if (tape.value(p_logits).shape() != tape.value(q_logits).shape()) {
    throw ValidationError("kl_divergence shape mismatch: " + shape_string(tape.value(p_logits).shape()) +
                          " vs " + shape_string(tape.value(q_logits).shape()));
  }
  const Var log_p = log_softmax(tape, p_logits);
  const Var log_q = log_softmax(tape, q_logits);
  return tape.sum_last(tape.mul(tape.exp(log_p), tape.sub(log_p, log_q)));
}

Var cw_margin_rows(Tape& tape, Var logits, std::span<const int> labels) {
  const Tensor& z = tape.value(logits);
  const Tensor onehot = one_hot_rows(z.shape(), labels);
  // The true class is pushed far below every logit so max_last picks a wrong class.
  double spread = 1.0;
  for (double v : z.data()) spread = std::max(spread, std::abs(v));
  const Var masked = tape.add(logits, tape.leaf(ops::scale(onehot, -4.0 * spread - 1.0)));
  const Var true_logit = tape.sum_last(tape.mul(logits, tape.leaf(onehot)));
  return tape.sub(tape.max_last(masked), true_logit);
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ValidationError("finite difference step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace wpb
