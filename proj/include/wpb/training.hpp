#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wpb/attacks.hpp"
#include "wpb/autodiff.hpp"
#include "wpb/data.hpp"
#include "wpb/models.hpp"
#include "wpb/vulnerability.hpp"

namespace wpb {

enum class TrainObjective { at, trades };

const char* objective_name(TrainObjective objective);
TrainObjective parse_objective(const std::string& name);

struct LrMilestone {
  int epoch = 0;
  double divisor = 10.0;

  bool operator==(const LrMilestone&) const = default;
};

struct TrainConfig {
  int epochs = 30;
  int warmup_epochs = 10;
  double base_eps = 8.0 / 255.0;
  ReweightMethod method = ReweightMethod::mwpb;
  double alpha = 0.58;
  TrainObjective objective = TrainObjective::at;
  double trades_beta = 6.0;
  int pgd_steps = 10;
  double init_noise_std = 0.001;
  double lr0 = 0.1;
  std::vector<LrMilestone> lr_milestones;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  std::optional<double> eps_cap;
  /// PGD steps used on the held-out split when picking the best epoch.
  int eval_steps = 20;

  void validate() const;
};

struct TrainState {
  Parameters params;
  std::vector<Tensor> velocity;
  int epoch = 0;
  std::uint64_t seed = 0;

  static TrainState initial(const MlpSpec& spec, std::uint64_t seed);
};

/// Budgets the loop actually used for one mini-batch.
struct BatchRecord {
  int epoch = 0;
  std::size_t batch = 0;
  bool warmup = false;
  double eps_min = 0.0;
  double eps_max = 0.0;
  double kappa_min = 0.0;
  double kappa_max = 0.0;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double nat_loss = 0.0;
  double adv_loss = 0.0;
  double nat_acc = 0.0;
  double rob_acc = 0.0;
  double eps_min = 0.0;
  double eps_mean = 0.0;
  double eps_max = 0.0;
};

struct EpochResult {
  EpochMetrics metrics;
  std::vector<BatchRecord> batches;
  /// Per training example (dataset order): vulnerability score and budget used.
  std::vector<double> scores;
  std::vector<double> epsilons;
};

double lr_at_epoch(const TrainConfig& cfg, int epoch);

/// v <- momentum * v + (g + weight_decay * theta); theta <- theta - lr * v.
void sgd_step(TrainState& state, std::span<const Tensor> gradients, double lr, const TrainConfig& cfg);

/// Mean training objective over the batch as a scalar node:
/// at -> CE(f(x_adv), y); trades -> CE(f(x), y) + beta * KL(f(x) || f(x_adv)).
Var adversarial_objective(Tape& tape, std::span<const Var> param_vars, const Tensor& x, const Tensor& x_adv,
                          std::span<const int> labels, TrainObjective objective, double beta = 6.0);
double adversarial_objective_value(const Parameters& params, const Tensor& x, const Tensor& x_adv,
                                   std::span<const int> labels, TrainObjective objective, double beta = 6.0);

/// Budgets for one batch at the given epoch: eps/2 and eps/8 during warm-up,
/// otherwise the configured reweighting of the current model's predictions.
RadiusAssignment epoch_budgets(const TrainConfig& cfg, int epoch, const Tensor& natural_probs,
                               std::span<const int> labels);

/// One pass over the shuffled dataset; advances state.epoch.
EpochResult train_epoch(TrainState& state, const Dataset& data, const TrainConfig& cfg);

/// PGD evaluation attack: K steps of eps/8 from a 0.001-noise start.
AttackConfig evaluation_pgd(double eps, int steps = 20, std::uint64_t seed = 0);

double accuracy(const Parameters& params, const Dataset& data);
double robust_accuracy(const Parameters& params, const Dataset& data, const AttackConfig& attack,
                       std::size_t chunk = 256);

struct TrainingResult {
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;
  int best_epoch = 0;
  std::vector<EpochMetrics> log;
  std::vector<BatchRecord> batches;
  /// Held-out PGD robust accuracy after each epoch (empty without a holdout).
  std::vector<double> holdout_robust_accuracy;
  /// Per-example scores and budgets from the best epoch.
  std::vector<double> best_scores;
  std::vector<double> best_epsilons;
};

TrainingResult run_training(const TrainConfig& cfg, const MlpSpec& spec, const Dataset& train,
                            const Dataset* holdout = nullptr);

}  // namespace wpb
