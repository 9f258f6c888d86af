#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "wpb/analysis.hpp"
#include "wpb/error.hpp"

using namespace wpb;
using wpb::testing::random_matrix;

namespace {

constexpr double kEps = 8.0 / 255.0;

/// Features in [0.1, 0.9] so that FGSM at the budgets used here never clips.
Dataset interior_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  CounterRng rng = CounterRng::derive(seed, {0x1D});
  Dataset data;
  data.features = random_matrix(n, d, rng, 0.1, 0.9);
  data.labels.assign(n, 0);
  data.num_classes = 2;
  return data;
}

LinearLoss random_linear(std::size_t d, std::uint64_t seed) {
  CounterRng rng = CounterRng::derive(seed, {0x11});
  Tensor w(Shape{d});
  for (auto& v : w.data()) v = rng.uniform(-3, 3);
  return LinearLoss(w, rng.uniform(-1, 1));
}

const Parameters& trained_moons_model() {
  static const Parameters params = [] {
    const Dataset train = generate_two_moons(400, 0.1, 31);
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.warmup_epochs = 4;
    cfg.batch_size = 32;
    cfg.pgd_steps = 5;
    return run_training(cfg, MlpSpec{2, {32, 32}, 2}, train).final_checkpoint.params;
  }();
  return params;
}

}  // namespace

TEST_CASE("evaluate") {
  const Dataset data = generate_blobs(200, 10, 0.2, 1);
  const MlpSpec spec{data.dim(), {8}, 10};
  AttackConfig zero = evaluation_pgd(0.0, 5);
  const std::vector<NamedAttack> attacks{{"none", zero}, {"pgd", evaluation_pgd(kEps, 5)}};

  const auto uniform = evaluate(zero_parameters(spec), data, attacks);
  CHECK(uniform.natural_accuracy == doctest::Approx(0.1));
  CHECK(uniform.attacks[0].robust_accuracy == uniform.natural_accuracy);

  const Parameters p = init_parameters(spec, 2);
  const auto a = evaluate(p, data, attacks, 64);
  const auto b = evaluate(p, data, attacks, 64);
  CHECK(a.attacks[0].robust_accuracy == a.natural_accuracy);
  CHECK(a.attacks[1].robust_accuracy == b.attacks[1].robust_accuracy);
  CHECK(a.attacks[1].mean_adv_loss == b.attacks[1].mean_adv_loss);
  CHECK(a.attacks[1].robust_accuracy <= a.natural_accuracy);

  AttackConfig per_example = zero;
  per_example.epsilons = {0.1, 0.2};
  CHECK_THROWS_AS(evaluate(p, data, std::vector<NamedAttack>{{"bad", per_example}}), ValidationError);
  CHECK_THROWS_AS(evaluate(p, data, std::vector<NamedAttack>{}), ValidationError);
}

TEST_CASE("robust accuracy does not increase with the budget on a trained model") {
  const Dataset test = generate_two_moons(300, 0.1, 32);
  double previous = 2.0;
  for (double k : {6.0, 8.0, 10.0, 12.0}) {
    const double acc = robust_accuracy(trained_moons_model(), test, evaluation_pgd(k / 255.0, 20, 3));
    CHECK(acc <= previous);
    previous = acc;
  }
}

TEST_CASE("first-order checks are exact on linear losses") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const Dataset data = interior_dataset(60, 5, trial);
    const LinearLoss loss = random_linear(5, trial);
    const auto t1 = verify_theorem1(loss, data, kEps, 0.5, 200, trial);
    CHECK(t1.fraction == 1.0);
    const std::vector<double> eps{2 / 255.0, 4 / 255.0, 8 / 255.0, 12 / 255.0};
    const auto t2 = verify_theorem2(loss, data, eps);
    CHECK(t2.fraction == 1.0);
    CHECK(t2.stats.at("mean_monotone") == 1.0);
    for (double e : {1e-4, 0.01, 0.05}) {
      const auto l1 = verify_lemma1(loss, data, e);
      CHECK(l1.fraction == 1.0);
      CHECK(l1.stats.at("max_abs_error") <= 1e-9);
      CHECK(std::abs(l1.stats.at("ratio_min") - 1.0) <= 1e-9);
      CHECK(std::abs(l1.stats.at("ratio_max") - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("theorem checks on a trained two-moons model") {
  const Dataset test = generate_two_moons(300, 0.1, 33);
  const auto t1 = verify_theorem1(trained_moons_model(), test, kEps, 0.5, 200, 0);
  CHECK(t1.fraction >= 0.9);
  const std::vector<double> eps{2 / 255.0, 4 / 255.0, 8 / 255.0, 12 / 255.0};
  CHECK(verify_theorem2(trained_moons_model(), test, eps).fraction >= 0.95);
  CHECK(verify_lemma1(trained_moons_model(), test, 1e-4).fraction >= 0.95);
  // Reproducible under a fixed seed.
  CHECK(verify_theorem1(trained_moons_model(), test, kEps, 0.5, 200, 0).fraction == t1.fraction);
}

TEST_CASE("theorem check edge cases") {
  const LinearLoss loss = random_linear(3, 1);
  const Dataset data = interior_dataset(30, 3, 1);
  const auto x = data.features.row(4);
  const auto same = theorem1_pair(loss, x, 0, x, 0, kEps);
  CHECK(same.loss_order);
  CHECK(same.increment_order);

  CHECK_THROWS_AS(verify_theorem2(loss, data, std::vector<double>{kEps}), ValidationError);
  CHECK_THROWS_AS(verify_theorem2(loss, data, std::vector<double>{0.03, 0.02}), ValidationError);
  CHECK_THROWS_AS(verify_lemma1(loss, data, 0.0), ValidationError);
  CHECK_THROWS_AS(verify_theorem1(loss, data, kEps, 100.0), ValidationError);
  CHECK_THROWS_AS(verify_lemma1(LinearLoss(Tensor::vector({0, 0, 0})), data, 0.01), ValidationError);
}

TEST_CASE("radii histogram") {
  const std::vector<double> flat(17, kEps);
  const auto h = radii_histogram(flat, 5);
  CHECK(h.counts[0] == 17);
  for (std::size_t b = 1; b < 5; ++b) CHECK(h.counts[b] == 0);
  CHECK(h.min == kEps);
  CHECK(h.max == kEps);
  CHECK(h.mean == kEps);

  const std::vector<double> spread{0.0, 0.25, 0.5, 0.75, 1.0};
  const auto s = radii_histogram(spread, 4);
  CHECK(s.edges == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(s.counts == std::vector<std::size_t>{1, 1, 1, 2});
  CHECK_THROWS_AS(radii_histogram(spread, 0), ValidationError);
  CHECK_THROWS_AS(radii_histogram(std::vector<double>{}, 3), ValidationError);
}

TEST_CASE("histogram bounds meet the analytic bounds exactly at extreme scores") {
  // Row 0: confident and correct (margin 1); row 1: confident and wrong (margin -1).
  const Tensor probs = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0.5, 0.3, 0.2});
  const std::vector<int> y{0, 0, 0};
  const auto m = assign_from_probabilities(probs, y, ReweightMethod::mwpb, 0.58, kEps);
  const auto hm = radii_histogram(m.epsilons, 10);
  CHECK(hm.max == mwpb_radius(1.0, 0.58, kEps));
  CHECK(hm.min == mwpb_radius(-1.0, 0.58, kEps));
  CHECK(m.epsilons[2] > hm.min);
  CHECK(m.epsilons[2] < hm.max);

  const auto s = assign_from_probabilities(probs, y, ReweightMethod::sdwpb, 0.62, kEps);
  const auto hs = radii_histogram(s.epsilons, 10);
  CHECK(hs.max == sdwpb_radius(std::sqrt(2.0 / 3.0), 0.62, kEps));
  CHECK(s.epsilons[2] > kEps);
  CHECK(s.epsilons[2] < hs.max);
}

TEST_CASE("dataset-level radius bounds") {
  const Dataset data = generate_blobs(500, 10, 0.3, 4);
  const Parameters p = init_parameters(MlpSpec{10, {32}, 10}, 4);
  const auto m = assign_batch(p, data.features, data.labels, ReweightMethod::mwpb, 0.58, kEps);
  const auto hm = radii_histogram(m.epsilons, 20);
  CHECK(hm.min >= kEps * std::exp(-0.58));
  CHECK(hm.max <= kEps * std::exp(0.58));
  const auto s = assign_batch(p, data.features, data.labels, ReweightMethod::sdwpb, 0.62, kEps);
  const auto hs = radii_histogram(s.epsilons, 20);
  CHECK(hs.min >= kEps);
  CHECK(hs.max <= kEps * std::exp(0.62 * std::sqrt(0.9)));

  // A larger alpha widens the support on both sides.
  const auto wide = radii_histogram(assign_batch(p, data.features, data.labels, ReweightMethod::mwpb, 1.5, kEps).epsilons, 20);
  CHECK(wide.min <= hm.min);
  CHECK(wide.max >= hm.max);
}

TEST_CASE("alpha zero sweep matches the fixed-budget run") {
  const Dataset train = generate_two_moons(120, 0.1, 40);
  const Dataset test = generate_two_moons(60, 0.1, 41);
  const MlpSpec spec{2, {8}, 2};
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.warmup_epochs = 0;
  cfg.batch_size = 32;
  cfg.pgd_steps = 2;
  const AttackConfig attack = evaluation_pgd(kEps, 5);
  const std::vector<double> alphas{0.0, 0.58};
  const auto rows = sweep_alpha(cfg, spec, alphas, train, test, attack);
  REQUIRE(rows.size() == 2);
  TrainConfig fixed = cfg;
  fixed.method = ReweightMethod::fixed;
  const auto run = run_training(fixed, spec, train, &test);
  CHECK(rows[0].natural_accuracy == accuracy(run.best_checkpoint.params, test));
  CHECK(rows[0].robust_accuracy == robust_accuracy(run.best_checkpoint.params, test, attack));
  CHECK(rows[0].eps_min == kEps);
  CHECK(rows[0].eps_max == kEps);
  CHECK(rows[1].eps_max > kEps);
}
