#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wpb/attacks.hpp"
#include "wpb/data.hpp"
#include "wpb/models.hpp"
#include "wpb/training.hpp"

namespace wpb {

struct NamedAttack {
  std::string name;
  AttackConfig config;
};

struct AttackOutcome {
  std::string name;
  AttackConfig config;
  double robust_accuracy = 0.0;
  double mean_adv_loss = 0.0;
};

struct RobustnessReport {
  std::size_t n = 0;
  double natural_accuracy = 0.0;
  std::vector<AttackOutcome> attacks;
};

/// Natural accuracy once, then robust accuracy and mean achieved loss per attack.
/// Each attack needs a single shared budget.
RobustnessReport evaluate(const Parameters& params, const Dataset& data, std::span<const NamedAttack> attacks,
                          std::size_t chunk = 256);

struct TheoremReport {
  std::string theorem;
  std::size_t n = 0;
  double fraction = 0.0;
  std::size_t excluded = 0;
  std::map<std::string, double> stats;
};

inline constexpr double kOrderingTolerance = 1e-9;
inline constexpr double kMonotoneTolerance = 1e-6;

struct PairOutcome {
  bool loss_order = false;       // L(x1') >= L(x2')
  bool increment_order = false;  // L(x1') - L(x1) >= L(x2') - L(x2)
};

/// Both orderings for a pair whose first member has the larger natural loss,
/// with ties inside kOrderingTolerance counted as satisfying.
PairOutcome theorem1_pair(const ExampleLoss& loss, std::span<const double> x1, int y1, std::span<const double> x2,
                          int y2, double eps);

/// Pairs with natural-loss gap >= min_gap are enumerated, up to `pairs` of
/// them drawn without replacement, and attacked with shared-budget FGSM.
/// `fraction` is the share of pairs where both orderings hold.
TheoremReport verify_theorem1(const ExampleLoss& loss, const Dataset& data, double eps, double min_gap = 0.5,
                              std::size_t pairs = 200, std::uint64_t seed = 0);
TheoremReport verify_theorem1(const Parameters& params, const Dataset& data, double eps, double min_gap = 0.5,
                              std::size_t pairs = 200, std::uint64_t seed = 0);

/// Deterministic-start PGD at every budget; `fraction` is the share of
/// examples whose inner-max loss is nondecreasing along eps_list.
TheoremReport verify_theorem2(const ExampleLoss& loss, const Dataset& data, std::span<const double> eps_list,
                              int steps = 20);
TheoremReport verify_theorem2(const Parameters& params, const Dataset& data, std::span<const double> eps_list,
                              int steps = 20);

/// Ratio (L(fgsm(x)) - L(x)) / (eps * ||grad||_1) per example; `fraction`
/// is the share within `band` of 1. Zero-gradient examples are excluded.
TheoremReport verify_lemma1(const ExampleLoss& loss, const Dataset& data, double small_eps, double band = 0.01);
TheoremReport verify_lemma1(const Parameters& params, const Dataset& data, double small_eps, double band = 0.01);

struct RadiiHistogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> counts;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

RadiiHistogram radii_histogram(std::span<const double> epsilons, std::size_t bins);

struct SweepRow {
  double alpha = 0.0;
  double natural_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double eps_min = 0.0;
  double eps_mean = 0.0;
  double eps_max = 0.0;
};

/// One training run per alpha from the same seed; accuracies are measured on
/// `test` with `attack`, radii are those of the best epoch.
std::vector<SweepRow> sweep_alpha(const TrainConfig& base, const MlpSpec& spec, std::span<const double> alphas,
                                  const Dataset& train, const Dataset& test, const AttackConfig& attack);

}  // namespace wpb
