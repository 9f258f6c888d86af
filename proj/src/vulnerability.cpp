#include "wpb/vulnerability.hpp"

#include <cmath>

#include "wpb/error.hpp"
#include "wpb/functional.hpp"

namespace wpb {

const char* method_name(ReweightMethod method) {
  switch (method) {
    case ReweightMethod::fixed: return "fixed";
    case ReweightMethod::mwpb: return "mwpb";
    case ReweightMethod::sdwpb: return "sdwpb";
  }
  return "unknown";
}

ReweightMethod parse_method(const std::string& name) {
  if (name == "fixed") return ReweightMethod::fixed;
  if (name == "mwpb" || name == "margin") return ReweightMethod::mwpb;
  if (name == "sdwpb" || name == "modified-std") return ReweightMethod::sdwpb;
  throw ValidationError("unknown reweighting method '" + name + "' (expected fixed, mwpb or sdwpb)");
}

namespace {

void check_scoring_args(std::span<const double> probs, int y) {
  if (probs.size() < 2) throw ValidationError("vulnerability scores need at least 2 classes");
  if (y < 0 || static_cast<std::size_t>(y) >= probs.size())
    throw ValidationError("label " + std::to_string(y) + " out of range for " + std::to_string(probs.size()) +
                          " classes");
}

}  // namespace

double margin(std::span<const double> probs, int y) {
  check_scoring_args(probs, y);
  const auto true_class = static_cast<std::size_t>(y);
  double runner_up = -INFINITY;
  for (std::size_t k = 0; k < probs.size(); ++k)
    if (k != true_class) runner_up = std::max(runner_up, probs[k]);
  return probs[true_class] - runner_up;
}

double modified_std(std::span<const double> probs, int y) {
  check_scoring_args(probs, y);
  const double center = probs[static_cast<std::size_t>(y)];
  double total = 0.0;
  for (double p : probs) total += (p - center) * (p - center);
  return std::sqrt(total / static_cast<double>(probs.size()));
}

double mwpb_radius(double margin_score, double alpha, double eps) {
  if (!(eps > 0.0)) throw ValidationError("base budget must be positive");
  return std::exp(alpha * margin_score) * eps;
}

double sdwpb_radius(double std_score, double alpha, double eps) {
  if (!(eps > 0.0)) throw ValidationError("base budget must be positive");
  if (std_score < 0.0) throw ValidationError("modified standard deviation cannot be negative");
  return std::exp(alpha * std_score) * eps;
}

RadiusAssignment assign_from_probabilities(const Tensor& probs, std::span<const int> labels,
                                           ReweightMethod method, double alpha, double eps,
                                           std::optional<double> cap) {
  if (probs.rank() != 2 || probs.rows() == 0) throw ValidationError("assignment needs a nonempty batch");
  if (labels.size() != probs.rows()) throw ValidationError("label count does not match batch size");
  if (!(eps > 0.0)) throw ValidationError("base budget must be positive");
  if (alpha < 0.0) throw ValidationError("alpha must be non-negative");
  if (cap && !(*cap > 0.0)) throw ValidationError("budget cap must be positive");

  RadiusAssignment out;
  out.method = method;
  out.alpha = alpha;
  out.base_eps = eps;
  const std::size_t n = probs.rows();
  out.scores.resize(n);
  out.epsilons.resize(n);
  out.kappas.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = probs.row(i);
    double eps_i = eps;
    switch (method) {
      case ReweightMethod::fixed:
        out.scores[i] = 0.0;
        break;
      case ReweightMethod::mwpb:
        out.scores[i] = margin(row, labels[i]);
        eps_i = mwpb_radius(out.scores[i], alpha, eps);
        break;
      case ReweightMethod::sdwpb:
        out.scores[i] = modified_std(row, labels[i]);
        eps_i = sdwpb_radius(out.scores[i], alpha, eps);
        break;
    }
    if (cap) eps_i = std::min(eps_i, *cap);
    out.epsilons[i] = eps_i;
    out.kappas[i] = step_size(eps_i);
  }
  return out;
}

RadiusAssignment assign_batch(const Parameters& params, const Tensor& x, std::span<const int> labels,
                              ReweightMethod method, double alpha, double eps, std::optional<double> cap) {
  if (x.rank() != 2 || x.rows() == 0) throw ValidationError("assignment needs a nonempty batch");
  return assign_from_probabilities(softmax_rows(forward_logits(params, x)), labels, method, alpha, eps, cap);
}

}  // namespace wpb
