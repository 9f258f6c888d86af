#include "wpb/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wpb/error.hpp"
#include "wpb/rng.hpp"

namespace wpb {

RobustnessReport evaluate(const Parameters& params, const Dataset& data, std::span<const NamedAttack> attacks,
                          std::size_t chunk) {
  if (attacks.empty()) throw ValidationError("evaluate needs at least one attack");
  data.validate();
  RobustnessReport report;
  report.n = data.size();
  report.natural_accuracy = accuracy(params, data);
  for (const auto& [name, config] : attacks) {
    config.validate();
    if (config.epsilons.size() != 1) throw ValidationError("attack '" + name + "' needs one shared budget");
    std::size_t correct = 0;
    double loss_total = 0.0;
    for (std::size_t start = 0; start < data.size(); start += chunk) {
      std::vector<std::size_t> idx(std::min(chunk, data.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      const Dataset part = data.subset(idx);
      AttackConfig cfg = config;
      cfg.seed = CounterRng::derive(config.seed, {0xE7A1u, start}).next_u64();
      const auto adv = run_attack(params, part.features, part.labels, cfg);
      const auto pred = predict_class(params, adv.x_adv);
      for (std::size_t r = 0; r < pred.size(); ++r) correct += pred[r] == part.labels[r] ? 1 : 0;
      for (double l : adv.achieved_loss) loss_total += l;
    }
    const double n = static_cast<double>(data.size());
    report.attacks.push_back({name, config, static_cast<double>(correct) / n, loss_total / n});
  }
  return report;
}

PairOutcome theorem1_pair(const ExampleLoss& loss, std::span<const double> x1, int y1, std::span<const double> x2,
                          int y2, double eps) {
  if (x1.size() != x2.size()) throw ValidationError("pair members differ in width");
  std::vector<double> both(x1.begin(), x1.end());
  both.insert(both.end(), x2.begin(), x2.end());
  const Tensor x = Tensor::matrix(2, x1.size(), std::move(both));
  const int labels[] = {y1, y2};
  const double budgets[] = {eps};
  const auto natural = loss.losses(x, labels);
  const auto adversarial = loss.losses(fgsm(loss, x, labels, budgets), labels);
  PairOutcome out;
  out.loss_order = adversarial[0] >= adversarial[1] - kOrderingTolerance;
  out.increment_order = adversarial[0] - natural[0] >= adversarial[1] - natural[1] - kOrderingTolerance;
  return out;
}

TheoremReport verify_theorem1(const ExampleLoss& loss, const Dataset& data, double eps, double min_gap,
                              std::size_t pairs, std::uint64_t seed) {
  if (!(eps > 0.0)) throw ValidationError("theorem 1 check needs eps > 0");
  if (!(min_gap >= 0.0)) throw ValidationError("min_gap must be >= 0");
  if (pairs < 1) throw ValidationError("theorem 1 check needs at least one pair");
  const double budgets[] = {eps};
  const auto natural = loss.losses(data.features, data.labels);
  const auto adversarial = loss.losses(fgsm(loss, data.features, data.labels, budgets), data.labels);

  // Large datasets enumerate pairs within a seeded pool of kPairPool examples.
  constexpr std::size_t kPairPool = 2000;
  CounterRng rng = CounterRng::derive(seed, {0x7E01u});
  std::vector<std::size_t> pool(data.size());
  std::iota(pool.begin(), pool.end(), 0);
  if (pool.size() > kPairPool) {
    for (std::size_t k = 0; k < kPairPool; ++k) std::swap(pool[k], pool[k + rng.below(pool.size() - k)]);
    pool.resize(kPairPool);
    std::sort(pool.begin(), pool.end());
  }
  std::vector<std::pair<std::size_t, std::size_t>> candidates;  // (higher loss, lower loss)
  for (std::size_t a = 0; a < pool.size(); ++a)
    for (std::size_t b = a + 1; b < pool.size(); ++b) {
      const std::size_t i = pool[a], j = pool[b];
      if (std::abs(natural[i] - natural[j]) < min_gap) continue;
      candidates.emplace_back(natural[i] >= natural[j] ? std::pair{i, j} : std::pair{j, i});
    }
  if (candidates.size() < 10)
    throw ValidationError("only " + std::to_string(candidates.size()) + " pairs have natural-loss gap >= " +
                          std::to_string(min_gap) + "; need at least 10");
  const std::size_t take = std::min(pairs, candidates.size());
  for (std::size_t k = 0; k < take; ++k) std::swap(candidates[k], candidates[k + rng.below(candidates.size() - k)]);

  std::size_t loss_ok = 0, increment_ok = 0, both_ok = 0;
  double gap_total = 0.0;
  for (std::size_t k = 0; k < take; ++k) {
    const auto [hi, lo] = candidates[k];
    const bool order = adversarial[hi] >= adversarial[lo] - kOrderingTolerance;
    const bool increment =
        adversarial[hi] - natural[hi] >= adversarial[lo] - natural[lo] - kOrderingTolerance;
    loss_ok += order;
    increment_ok += increment;
    both_ok += order && increment;
    gap_total += natural[hi] - natural[lo];
  }
  const double n = static_cast<double>(take);
  TheoremReport report;
  report.theorem = "theorem1";
  report.n = take;
  report.fraction = both_ok / n;
  report.stats = {{"eps", eps},
                  {"min_gap", min_gap},
                  {"qualifying_pairs", static_cast<double>(candidates.size())},
                  {"loss_order_fraction", loss_ok / n},
                  {"increment_order_fraction", increment_ok / n},
                  {"mean_gap", gap_total / n}};
  return report;
}

TheoremReport verify_theorem1(const Parameters& params, const Dataset& data, double eps, double min_gap,
                              std::size_t pairs, std::uint64_t seed) {
  return verify_theorem1(ModelLoss(params, LossKind::cross_entropy), data, eps, min_gap, pairs, seed);
}

TheoremReport verify_theorem2(const ExampleLoss& loss, const Dataset& data, std::span<const double> eps_list,
                              int steps) {
  if (eps_list.size() < 2) throw ValidationError("theorem 2 check needs at least two budgets");
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    if (!(eps_list[k] > 0.0)) throw ValidationError("theorem 2 budgets must be positive");
    if (k > 0 && !(eps_list[k] > eps_list[k - 1])) throw ValidationError("theorem 2 budgets must strictly increase");
  }
  std::vector<std::vector<double>> per_eps;
  TheoremReport report;
  report.theorem = "theorem2";
  report.n = data.size();
  for (double eps : eps_list) {
    AttackConfig cfg;
    cfg.family = AttackFamily::pgd;
    cfg.epsilons = {eps};
    cfg.steps = steps;
    cfg.init_noise_std = 0.0;
    per_eps.push_back(pgd_linf(loss, data.features, data.labels, cfg).achieved_loss);
    const double mean = std::accumulate(per_eps.back().begin(), per_eps.back().end(), 0.0) / data.size();
    report.stats["mean_loss_eps_" + std::to_string(per_eps.size() - 1)] = mean;
  }
  std::size_t monotone = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 1; k < per_eps.size(); ++k) ok = ok && per_eps[k][i] >= per_eps[k - 1][i] - kMonotoneTolerance;
    monotone += ok;
  }
  bool mean_monotone = true;
  for (std::size_t k = 1; k < per_eps.size(); ++k)
    mean_monotone = mean_monotone && report.stats["mean_loss_eps_" + std::to_string(k)] >=
                                         report.stats["mean_loss_eps_" + std::to_string(k - 1)] - kMonotoneTolerance;
  report.fraction = static_cast<double>(monotone) / static_cast<double>(data.size());
  report.stats["mean_monotone"] = mean_monotone ? 1.0 : 0.0;
  report.stats["steps"] = steps;
  return report;
}

TheoremReport verify_theorem2(const Parameters& params, const Dataset& data, std::span<const double> eps_list,
                              int steps) {
  return verify_theorem2(ModelLoss(params, LossKind::cross_entropy), data, eps_list, steps);
}

TheoremReport verify_lemma1(const ExampleLoss& loss, const Dataset& data, double small_eps, double band) {
  if (!(small_eps > 0.0)) throw ValidationError("lemma 1 check needs eps > 0");
  Tensor grad;
  const auto natural = loss.losses_and_gradient(data.features, data.labels, grad);
  const double budgets[] = {small_eps};
  const auto attacked = loss.losses(fgsm(loss, data.features, data.labels, budgets), data.labels);

  std::vector<double> ratios;
  double max_abs_error = 0.0;
  TheoremReport report;
  report.theorem = "lemma1";
  for (std::size_t i = 0; i < data.size(); ++i) {
    double l1 = 0.0;
    for (double g : grad.row(i)) l1 += std::abs(g);
    if (l1 < 1e-12) {
      ++report.excluded;
      continue;
    }
    const double increase = attacked[i] - natural[i];
    max_abs_error = std::max(max_abs_error, std::abs(increase - small_eps * l1));
    ratios.push_back(increase / (small_eps * l1));
  }
  report.n = ratios.size();
  if (ratios.empty()) throw ValidationError("every example has a zero input gradient");
  const auto within = std::count_if(ratios.begin(), ratios.end(), [&](double r) { return std::abs(r - 1.0) <= band; });
  report.fraction = static_cast<double>(within) / static_cast<double>(ratios.size());
  std::vector<double> sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  report.stats = {{"eps", small_eps},
                  {"band", band},
                  {"ratio_min", sorted.front()},
                  {"ratio_max", sorted.back()},
                  {"ratio_median", sorted[sorted.size() / 2]},
                  {"ratio_mean", std::accumulate(sorted.begin(), sorted.end(), 0.0) / sorted.size()},
                  {"max_abs_error", max_abs_error}};
  return report;
}

TheoremReport verify_lemma1(const Parameters& params, const Dataset& data, double small_eps, double band) {
  return verify_lemma1(ModelLoss(params, LossKind::cross_entropy), data, small_eps, band);
}

RadiiHistogram radii_histogram(std::span<const double> epsilons, std::size_t bins) {
  if (bins < 1) throw ValidationError("histogram needs at least one bin");
  if (epsilons.empty()) throw ValidationError("histogram of an empty assignment");
  RadiiHistogram h;
  h.min = *std::min_element(epsilons.begin(), epsilons.end());
  h.max = *std::max_element(epsilons.begin(), epsilons.end());
  h.mean = std::accumulate(epsilons.begin(), epsilons.end(), 0.0) / static_cast<double>(epsilons.size());
  // Summation rounding can nudge the mean past an extreme when all values are equal.
  h.mean = std::clamp(h.mean, h.min, h.max);
  const double width = (h.max - h.min) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(b == bins ? h.max : h.min + width * b);
  h.counts.assign(bins, 0);
  for (double e : epsilons) {
    std::size_t b = 0;
    if (h.max > h.min) b = static_cast<std::size_t>((e - h.min) / (h.max - h.min) * static_cast<double>(bins));
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

std::vector<SweepRow> sweep_alpha(const TrainConfig& base, const MlpSpec& spec, std::span<const double> alphas,
                                  const Dataset& train, const Dataset& test, const AttackConfig& attack) {
  if (alphas.empty()) throw ValidationError("alpha sweep needs at least one alpha");
  std::vector<SweepRow> rows;
  for (double alpha : alphas) {
    TrainConfig cfg = base;
    cfg.alpha = alpha;
    const TrainingResult run = run_training(cfg, spec, train, &test);
    const Parameters& params = run.best_checkpoint.params;
    SweepRow row;
    row.alpha = alpha;
    row.natural_accuracy = accuracy(params, test);
    row.robust_accuracy = robust_accuracy(params, test, attack);
    const auto hist = radii_histogram(run.best_epsilons, 1);
    row.eps_min = hist.min;
    row.eps_mean = hist.mean;
    row.eps_max = hist.max;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace wpb
