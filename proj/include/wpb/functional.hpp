#pragma once

#include <functional>
#include <span>

#include "wpb/autodiff.hpp"
#include "wpb/tensor.hpp"

namespace wpb {

/// Max-shifted softmax of a logit vector. Requires at least two classes.
Tensor softmax_probabilities(const Tensor& logits);
/// Row-wise softmax of a [n, C] logit matrix.
Tensor softmax_rows(const Tensor& logits);

/// z - logsumexp(z) along the last axis.
Var log_softmax(Tape& tape, Var logits);

/// -log softmax(logits)[label] for a single logit vector; scalar node.
Var cross_entropy(Tape& tape, Var logits, int label);
/// Per-row cross-entropy of [n, C] logits; returns an [n, 1] node.
Var cross_entropy_rows(Tape& tape, Var logits, std::span<const int> labels);

/// KL(softmax(p) || softmax(q)) for two logit vectors; scalar node.
Var kl_divergence(Tape& tape, Var p_logits, Var q_logits);
/// Per-row KL of [n, C] logit matrices; returns an [n, 1] node.
Var kl_divergence_rows(Tape& tape, Var p_logits, Var q_logits);

/// Carlini-Wagner margin max_{k != y} z_k - z_y per row; [n, 1] node.
Var cw_margin_rows(Tape& tape, Var logits, std::span<const int> labels);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

}  // namespace wpb
