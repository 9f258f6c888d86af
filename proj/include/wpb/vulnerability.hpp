#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wpb/models.hpp"
#include "wpb/tensor.hpp"

namespace wpb {

/// How per-example budgets are derived from the base budget.
enum class ReweightMethod {
  fixed,  // every example gets the base budget
  mwpb,   // exp(alpha * margin) * eps
  sdwpb,  // exp(alpha * modified_std) * eps
};

const char* method_name(ReweightMethod method);
ReweightMethod parse_method(const std::string& name);

/// probs[y] - max_{k != y} probs[k]. In [-1, 1] for probability vectors.
double margin(std::span<const double> probs, int y);

/// Spread of the class probabilities around probs[y]:
/// sqrt(sum_k (probs[k] - probs[y])^2 / C). In [0, sqrt((C-1)/C)].
double modified_std(std::span<const double> probs, int y);

double mwpb_radius(double margin_score, double alpha, double eps);
double sdwpb_radius(double std_score, double alpha, double eps);
inline double step_size(double eps_i) { return eps_i / 4.0; }

struct RadiusAssignment {
  std::vector<double> scores;
  std::vector<double> epsilons;
  std::vector<double> kappas;
  ReweightMethod method = ReweightMethod::fixed;
  double alpha = 0.0;
  double base_eps = 0.0;
  int epoch = 0;

  std::size_t size() const { return epsilons.size(); }
};

/// Scores each row from its class probabilities and maps the score to a
/// budget and step size. Fixed-method scores are recorded as 0.
RadiusAssignment assign_from_probabilities(const Tensor& probs, std::span<const int> labels,
                                           ReweightMethod method, double alpha, double eps,
                                           std::optional<double> cap = std::nullopt);

/// Runs the model on the batch, then assign_from_probabilities.
RadiusAssignment assign_batch(const Parameters& params, const Tensor& x, std::span<const int> labels,
                              ReweightMethod method, double alpha, double eps,
                              std::optional<double> cap = std::nullopt);

}  // namespace wpb
