#include "wpb/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wpb/error.hpp"
#include "wpb/functional.hpp"
#include "wpb/rng.hpp"

namespace wpb {

const char* objective_name(TrainObjective objective) {
  return objective == TrainObjective::at ? "at" : "trades";
}

TrainObjective parse_objective(const std::string& name) {
  if (name == "at") return TrainObjective::at;
  if (name == "trades") return TrainObjective::trades;
  throw ValidationError("unknown objective '" + name + "' (expected at or trades)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (warmup_epochs < 0 || warmup_epochs > epochs)
    throw ValidationError("warmup_epochs must lie in [0, epochs]");
  if (!(base_eps > 0.0)) throw ValidationError("base eps must be positive");
  if (!(alpha >= 0.0)) throw ValidationError("alpha must be >= 0");
  if (!(trades_beta >= 0.0)) throw ValidationError("trades beta must be >= 0");
  if (pgd_steps < 1) throw ValidationError("pgd_steps must be at least 1");
  if (eval_steps < 1) throw ValidationError("eval_steps must be at least 1");
  if (!(init_noise_std >= 0.0)) throw ValidationError("init noise std must be >= 0");
  if (!(lr0 > 0.0)) throw ValidationError("learning rate must be positive");
  for (const auto& m : lr_milestones) {
    if (m.epoch < 1) throw ValidationError("learning-rate milestones must be at epoch >= 1");
    if (!(m.divisor > 1.0)) throw ValidationError("learning-rate divisors must be > 1");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be >= 0");
  if (batch_size < 1) throw ValidationError("batch size must be at least 1");
  if (eps_cap && !(*eps_cap > 0.0)) throw ValidationError("eps cap must be positive");
}

TrainState TrainState::initial(const MlpSpec& spec, std::uint64_t seed) {
  TrainState state;
  state.params = init_parameters(spec, seed);
  for (const auto& entry : state.params.entries) state.velocity.emplace_back(entry.value.shape(), 0.0);
  state.seed = seed;
  return state;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr0;
  for (const auto& m : cfg.lr_milestones)
    if (m.epoch <= epoch) lr /= m.divisor;
  return lr;
}

void sgd_step(TrainState& state, std::span<const Tensor> gradients, double lr, const TrainConfig& cfg) {
  auto& entries = state.params.entries;
  if (gradients.size() != entries.size() || state.velocity.size() != entries.size())
    throw ValidationError("gradient count does not match parameter count");
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor& theta = entries[p].value;
    Tensor& v = state.velocity[p];
    const Tensor& g = gradients[p];
    if (g.shape() != theta.shape() || v.shape() != theta.shape())
      throw ValidationError("gradient shape " + shape_string(g.shape()) + " does not match parameter " +
                            entries[p].name + " " + shape_string(theta.shape()));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = cfg.momentum * v[i] + (g[i] + cfg.weight_decay * theta[i]);
      theta[i] -= lr * v[i];
    }
  }
}

Var adversarial_objective(Tape& tape, std::span<const Var> param_vars, const Tensor& x, const Tensor& x_adv,
                          std::span<const int> labels, TrainObjective objective, double beta) {
  if (x.shape() != x_adv.shape()) throw ValidationError("natural and adversarial batches differ in shape");
  if (x.rank() != 2 || x.rows() != labels.size()) throw ValidationError("label count does not match batch size");
  const double inv_n = 1.0 / static_cast<double>(labels.size());
  const Var adv_logits = forward_logits(tape, param_vars, tape.leaf(x_adv));
  switch (objective) {
    case TrainObjective::at:
      return tape.scale(tape.sum(cross_entropy_rows(tape, adv_logits, labels)), inv_n);
    case TrainObjective::trades: {
      const Var nat_logits = forward_logits(tape, param_vars, tape.leaf(x));
      const Var natural = cross_entropy_rows(tape, nat_logits, labels);
      const Var robust = kl_divergence_rows(tape, nat_logits, adv_logits);
      return tape.scale(tape.sum(tape.add(natural, tape.scale(robust, beta))), inv_n);
    }
  }
  throw ValidationError("unknown training objective");
}

double adversarial_objective_value(const Parameters& params, const Tensor& x, const Tensor& x_adv,
                                   std::span<const int> labels, TrainObjective objective, double beta) {
  Tape tape;
  const auto vars = record_parameters(tape, params);
  return tape.value(adversarial_objective(tape, vars, x, x_adv, labels, objective, beta)).item();
}

RadiusAssignment epoch_budgets(const TrainConfig& cfg, int epoch, const Tensor& natural_probs,
                               std::span<const int> labels) {
  RadiusAssignment out;
  if (epoch <= cfg.warmup_epochs) {
    out = assign_from_probabilities(natural_probs, labels, ReweightMethod::fixed, 0.0, cfg.base_eps / 2.0);
    out.base_eps = cfg.base_eps;
  } else {
    out = assign_from_probabilities(natural_probs, labels, cfg.method, cfg.alpha, cfg.base_eps, cfg.eps_cap);
  }
  out.epoch = epoch;
  return out;
}

namespace {

std::uint64_t batch_seed(std::uint64_t seed, int epoch, std::size_t batch) {
  return CounterRng::derive(seed, {0xA77Cu, static_cast<std::uint64_t>(epoch), batch}).next_u64();
}

double summed_ce(const Tensor& logits, std::span<const int> labels) {
  Tape tape;
  double total = 0.0;
  for (double v : tape.value(cross_entropy_rows(tape, tape.leaf(logits), labels)).data()) total += v;
  return total;
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const auto pred = argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < pred.size(); ++r) correct += pred[r] == labels[r] ? 1 : 0;
  return correct;
}

}  // namespace

EpochResult train_epoch(TrainState& state, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw ValidationError("cannot train on an empty dataset");
  if (data.dim() != state.params.input_dim()) throw ValidationError("dataset width does not match the model");

  const int epoch = state.epoch + 1;
  const double lr = lr_at_epoch(cfg, epoch);
  EpochResult result;
  result.scores.assign(data.size(), 0.0);
  result.epsilons.assign(data.size(), 0.0);
  double nat_loss = 0.0, adv_loss = 0.0, eps_total = 0.0;
  std::size_t nat_correct = 0, rob_correct = 0;
  double eps_min = INFINITY, eps_max = -INFINITY;

  const auto batches = shuffle_batches(data.size(), cfg.batch_size, state.seed, static_cast<std::uint64_t>(epoch));
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& idx = batches[b];
    const Tensor x = data.features.gather_rows(idx);
    std::vector<int> y;
    y.reserve(idx.size());
    for (std::size_t i : idx) y.push_back(data.labels[i]);

    const Tensor nat_logits = forward_logits(state.params, x);
    const RadiusAssignment budgets = epoch_budgets(cfg, epoch, softmax_rows(nat_logits), y);

    AttackConfig attack;
    attack.family = AttackFamily::pgd;
    attack.epsilons = budgets.epsilons;
    attack.step_sizes = budgets.kappas;
    attack.steps = cfg.pgd_steps;
    attack.init_noise_std = cfg.init_noise_std;
    attack.seed = batch_seed(state.seed, epoch, b);
    AdversarialBatch adv;
    if (cfg.objective == TrainObjective::trades) {
      attack.loss = LossKind::kl_natural;
      adv = pgd_linf(ModelLoss(state.params, LossKind::kl_natural, nat_logits), x, y, attack);
    } else {
      adv = pgd_linf(ModelLoss(state.params, LossKind::cross_entropy), x, y, attack);
    }

    const Tensor adv_logits = forward_logits(state.params, adv.x_adv);
    nat_loss += summed_ce(nat_logits, y);
    adv_loss += summed_ce(adv_logits, y);
    nat_correct += count_correct(nat_logits, y);
    rob_correct += count_correct(adv_logits, y);

    BatchRecord record{epoch, b, epoch <= cfg.warmup_epochs, INFINITY, -INFINITY, INFINITY, -INFINITY};
    for (std::size_t r = 0; r < idx.size(); ++r) {
      record.eps_min = std::min(record.eps_min, budgets.epsilons[r]);
      record.eps_max = std::max(record.eps_max, budgets.epsilons[r]);
      record.kappa_min = std::min(record.kappa_min, budgets.kappas[r]);
      record.kappa_max = std::max(record.kappa_max, budgets.kappas[r]);
      eps_total += budgets.epsilons[r];
      result.scores[idx[r]] = budgets.scores[r];
      result.epsilons[idx[r]] = budgets.epsilons[r];
    }
    eps_min = std::min(eps_min, record.eps_min);
    eps_max = std::max(eps_max, record.eps_max);
    result.batches.push_back(record);

    Tape tape;
    const auto vars = record_parameters(tape, state.params);
    const Var objective = adversarial_objective(tape, vars, x, adv.x_adv, y, cfg.objective, cfg.trades_beta);
    const GradientSet grads = tape.backward(objective, vars);
    sgd_step(state, grads.tensors(), lr, cfg);
  }

  const double n = static_cast<double>(data.size());
  result.metrics = EpochMetrics{epoch,           lr,        nat_loss / n, adv_loss / n, nat_correct / n,
                                rob_correct / n, eps_min, eps_total / n, eps_max};
  state.epoch = epoch;
  return result;
}

AttackConfig evaluation_pgd(double eps, int steps, std::uint64_t seed) {
  AttackConfig cfg;
  cfg.family = AttackFamily::pgd;
  cfg.epsilons = {eps};
  cfg.step_sizes = {eps / 8.0};
  cfg.steps = steps;
  cfg.init_noise_std = 0.001;
  cfg.seed = seed;
  return cfg;
}

double accuracy(const Parameters& params, const Dataset& data) {
  return static_cast<double>(count_correct(forward_logits(params, data.features), data.labels)) /
         static_cast<double>(data.size());
}

double robust_accuracy(const Parameters& params, const Dataset& data, const AttackConfig& attack, std::size_t chunk) {
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    std::vector<std::size_t> idx(std::min(chunk, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Dataset part = data.subset(idx);
    AttackConfig cfg = attack;
    cfg.seed = CounterRng::derive(attack.seed, {0xE7A1u, start}).next_u64();
    if (cfg.epsilons.size() != 1) throw ValidationError("robust_accuracy needs one shared budget");
    const auto adv = run_attack(params, part.features, part.labels, cfg);
    correct += count_correct(forward_logits(params, adv.x_adv), part.labels);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainingResult run_training(const TrainConfig& cfg, const MlpSpec& spec, const Dataset& train, const Dataset* holdout) {
  cfg.validate();
  spec.validate();
  train.validate();
  if (train.dim() != spec.input_dim) throw ValidationError("dataset width does not match the model input");
  if (train.num_classes > spec.num_classes) throw ValidationError("dataset has more classes than the model");
  if (holdout) holdout->validate();

  TrainState state = TrainState::initial(spec, cfg.seed);
  TrainingResult result;
  double best_score = -INFINITY;
  const AttackConfig holdout_attack = evaluation_pgd(cfg.base_eps, cfg.eval_steps, cfg.seed);
  auto snapshot = [&](int epoch) {
    return Checkpoint{spec, state.params, static_cast<std::uint32_t>(epoch),
                      RngState{state.seed, static_cast<std::uint64_t>(epoch)}};
  };

  for (int e = 0; e < cfg.epochs; ++e) {
    EpochResult epoch = train_epoch(state, train, cfg);
    result.log.push_back(epoch.metrics);
    result.batches.insert(result.batches.end(), epoch.batches.begin(), epoch.batches.end());
    double score = epoch.metrics.rob_acc;
    if (holdout) {
      score = robust_accuracy(state.params, *holdout, holdout_attack);
      result.holdout_robust_accuracy.push_back(score);
    }
    // Ties keep the later epoch.
    if (score >= best_score) {
      best_score = score;
      result.best_epoch = state.epoch;
      result.best_checkpoint = snapshot(state.epoch);
      result.best_scores = std::move(epoch.scores);
      result.best_epsilons = std::move(epoch.epsilons);
    }
  }
  result.final_checkpoint = snapshot(state.epoch);
  return result;
}

}  // namespace wpb
