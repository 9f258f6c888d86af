#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wpb/models.hpp"
#include "wpb/tensor.hpp"

namespace wpb {

enum class LossKind {
  cross_entropy,
  cw_margin,   // max_{k != y} z_k - z_y on logits
  kl_natural,  // KL(softmax(f(x)) || softmax(f(x'))), the TRADES inner objective
};

const char* loss_name(LossKind kind);
LossKind parse_loss(const std::string& name);

/// A per-example scalar loss of the input, the thing every attack ascends.
class ExampleLoss {
 public:
  virtual ~ExampleLoss() = default;
  virtual std::vector<double> losses(const Tensor& x, std::span<const int> labels) const = 0;
  /// Per-example losses plus d loss_i / d x_i written row-wise into `grad`.
  virtual std::vector<double> losses_and_gradient(const Tensor& x, std::span<const int> labels,
                                                  Tensor& grad) const = 0;
};

/// Loss of an MLP classifier. For kl_natural the reference logits f(x) of
/// the clean batch are fixed at construction.
class ModelLoss final : public ExampleLoss {
 public:
  ModelLoss(const Parameters& params, LossKind kind, std::optional<Tensor> reference_logits = std::nullopt);

  std::vector<double> losses(const Tensor& x, std::span<const int> labels) const override;
  std::vector<double> losses_and_gradient(const Tensor& x, std::span<const int> labels,
                                          Tensor& grad) const override;

 private:
  const Parameters& params_;
  LossKind kind_;
  std::optional<Tensor> reference_;
};

/// loss(x) = w . x + b, independent of the label. Its first-order expansion
/// is exact, which makes it the closed-form oracle for the theorem checks.
class LinearLoss final : public ExampleLoss {
 public:
  LinearLoss(Tensor weights, double bias = 0.0);

  std::vector<double> losses(const Tensor& x, std::span<const int> labels) const override;
  std::vector<double> losses_and_gradient(const Tensor& x, std::span<const int> labels,
                                          Tensor& grad) const override;

  const Tensor& weights() const { return weights_; }

 private:
  Tensor weights_;
  double bias_;
};

enum class AttackFamily { fgsm, pgd, cw_pgd, spsa };

const char* family_name(AttackFamily family);
AttackFamily parse_family(const std::string& name);

struct SpsaOptions {
  int iterations = 100;
  double perturbation = 0.001;
  double learning_rate = 0.01;
  int samples = 256;  // probes per gradient estimate; antithetic pairs, so even

  bool operator==(const SpsaOptions&) const = default;
};

struct AttackConfig {
  AttackFamily family = AttackFamily::pgd;
  /// One shared budget, or one per example.
  std::vector<double> epsilons{8.0 / 255.0};
  int steps = 20;
  /// Empty means eps_i / 4. Otherwise one shared value or one per example.
  std::vector<double> step_sizes;
  double init_noise_std = 0.001;
  LossKind loss = LossKind::cross_entropy;
  SpsaOptions spsa;
  double clip_lo = 0.0;
  double clip_hi = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdversarialBatch {
  Tensor x_adv;
  std::vector<double> achieved_loss;
  std::vector<double> linf_distance;
};

/// Clamp each coordinate into [center - eps, center + eps].
Tensor project_linf(const Tensor& candidate, const Tensor& center, double eps);
/// Row-wise budgets for [n, d] tensors; `eps` has 1 or n entries.
Tensor project_linf(const Tensor& candidate, const Tensor& center, std::span<const double> eps);

/// Per-row l-infinity distance between two [n, d] tensors.
std::vector<double> linf_distance(const Tensor& a, const Tensor& b);

/// x + eps * sign(grad), clipped. sign(0) = 0.
Tensor fgsm(const ExampleLoss& loss, const Tensor& x, std::span<const int> labels,
            std::span<const double> eps, double clip_lo = 0.0, double clip_hi = 1.0);
Tensor fgsm(const Parameters& params, const Tensor& x, std::span<const int> labels, double eps);

/// Signed-gradient ascent from a noisy start, projected onto B_{eps_i}(x_i)
/// and clipped after every step.
AdversarialBatch pgd_linf(const ExampleLoss& loss, const Tensor& x, std::span<const int> labels,
                          const AttackConfig& cfg);
AdversarialBatch pgd_linf(const Parameters& params, const Tensor& x, std::span<const int> labels,
                          const AttackConfig& cfg);

/// PGD on the Carlini-Wagner margin objective.
AdversarialBatch cw_pgd(const Parameters& params, const Tensor& x, std::span<const int> labels,
                        const AttackConfig& cfg);

/// Gradient-free ascent with antithetic Rademacher SPSA estimates.
AdversarialBatch spsa(const ExampleLoss& loss, const Tensor& x, std::span<const int> labels,
                      const AttackConfig& cfg);
AdversarialBatch spsa(const Parameters& params, const Tensor& x, std::span<const int> labels,
                      const AttackConfig& cfg);

/// Dispatch on cfg.family; FGSM uses the first budget per example.
AdversarialBatch run_attack(const Parameters& params, const Tensor& x, std::span<const int> labels,
                            const AttackConfig& cfg);

/// SPSA gradient estimate alone, for testing the estimator.
Tensor spsa_gradient(const ExampleLoss& loss, const Tensor& x, std::span<const int> labels,
                     const SpsaOptions& opts, std::uint64_t seed, std::uint64_t iteration = 0);

}  // namespace wpb
