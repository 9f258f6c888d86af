#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "wpb/attacks.hpp"
#include "wpb/error.hpp"
#include "wpb/functional.hpp"

using namespace wpb;
using wpb::testing::random_labels;
using wpb::testing::random_matrix;

namespace {

/// sum_j a_j (x_j - c_j)^2 per row, label ignored.
class QuadraticLoss final : public ExampleLoss {
 public:
  QuadraticLoss(std::vector<double> a, std::vector<double> c) : a_(std::move(a)), c_(std::move(c)) {}
  std::vector<double> losses(const Tensor& x, std::span<const int>) const override {
    std::vector<double> out(x.rows(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t j = 0; j < x.cols(); ++j) out[r] += a_[j] * (x.at(r, j) - c_[j]) * (x.at(r, j) - c_[j]);
    return out;
  }
  std::vector<double> losses_and_gradient(const Tensor& x, std::span<const int> y, Tensor& grad) const override {
    grad = Tensor(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t j = 0; j < x.cols(); ++j) grad.at(r, j) = 2.0 * a_[j] * (x.at(r, j) - c_[j]);
    return losses(x, y);
  }

 private:
  std::vector<double> a_, c_;
};

AttackConfig deterministic_pgd(double eps, int steps) {
  AttackConfig cfg;
  cfg.epsilons = {eps};
  cfg.steps = steps;
  cfg.init_noise_std = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("projection examples") {
  const Tensor c = Tensor::matrix(1, 1, {0.5});
  CHECK(project_linf(Tensor::matrix(1, 1, {0.75}), c, 0.1)[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(project_linf(Tensor::matrix(1, 1, {0.45}), c, 0.1)[0] == 0.45);
  CHECK(project_linf(Tensor::matrix(1, 1, {0.9}), c, 0.0)[0] == 0.5);
  const Tensor two = Tensor::matrix(2, 2, {0.9, 0.9, 0.9, 0.9});
  const std::vector<double> eps{0.1, 0.3};
  const Tensor p = project_linf(two, Tensor::matrix(2, 2, {0.5, 0.5, 0.5, 0.5}), eps);
  CHECK(p.at(0, 0) == doctest::Approx(0.6));
  CHECK(p.at(1, 1) == doctest::Approx(0.8));
  CHECK_THROWS_AS(project_linf(two, c, 0.1), ValidationError);
}

TEST_CASE("fgsm on a linear loss raises it by eps times the l1 norm") {
  const LinearLoss loss(Tensor::vector({1, -2, 3}), 0.25);
  const Tensor x = Tensor::matrix(1, 3, {0.5, 0.5, 0.5});
  const std::vector<int> y{0};
  const std::vector<double> eps{0.1};
  const Tensor adv = fgsm(loss, x, y, eps);
  CHECK(std::abs(loss.losses(adv, y)[0] - loss.losses(x, y)[0] - 0.6) <= 1e-12);
  CHECK(fgsm(loss, x, y, std::vector<double>{0.0}).bit_equal(x));
  const LinearLoss flat(Tensor::vector({0, 0, 0}));
  CHECK(fgsm(flat, x, y, eps).bit_equal(x));
}

TEST_CASE("pgd reductions") {
  const Parameters p = init_parameters(MlpSpec{4, {16}, 3}, 1);
  CounterRng rng = CounterRng::derive(31, {});
  const Tensor x = random_matrix(40, 4, rng, 0.2, 0.8);
  const auto y = random_labels(40, 3, rng);

  SUBCASE("zero budgets leave the input alone") {
    AttackConfig cfg;
    cfg.epsilons = {0.0};
    const auto out = pgd_linf(p, x, y, cfg);
    CHECK(out.x_adv.bit_equal(x));
    const auto natural = ModelLoss(p, LossKind::cross_entropy).losses(x, y);
    for (std::size_t i = 0; i < natural.size(); ++i) CHECK(out.achieved_loss[i] == natural[i]);
  }
  SUBCASE("one deterministic step is fgsm with step min(kappa, eps)") {
    std::vector<double> eps(40);
    for (auto& e : eps) e = rng.uniform(0.0, 0.1);
    AttackConfig cfg = deterministic_pgd(0.0, 1);
    cfg.epsilons = eps;
    const auto out = pgd_linf(p, x, y, cfg);
    std::vector<double> step(40);
    for (std::size_t i = 0; i < 40; ++i) step[i] = std::min(eps[i] / 4.0, eps[i]);
    CHECK(out.x_adv.bit_equal(fgsm(ModelLoss(p, LossKind::cross_entropy), x, y, step)));
  }
  SUBCASE("seeded runs are bit-identical") {
    AttackConfig cfg;
    cfg.seed = 9;
    CHECK(pgd_linf(p, x, y, cfg).x_adv.bit_equal(pgd_linf(p, x, y, cfg).x_adv));
    AttackConfig other = cfg;
    other.seed = 10;
    CHECK_FALSE(pgd_linf(p, x, y, cfg).x_adv.bit_equal(pgd_linf(p, x, y, other).x_adv));
  }
}

TEST_CASE("pgd stays in the ball and the box and ascends from a deterministic start") {
  CounterRng rng = CounterRng::derive(32, {});
  for (int trial = 0; trial < 8; ++trial) {
    const Parameters p = init_parameters(MlpSpec{5, {12, 8}, 4}, 100 + trial);
    const Tensor x = random_matrix(64, 5, rng);
    const auto y = random_labels(64, 4, rng);
    std::vector<double> eps(64);
    for (auto& e : eps) e = rng.uniform(0.0, 0.08);
    AttackConfig cfg = deterministic_pgd(0.0, 10);
    cfg.epsilons = eps;
    const auto out = pgd_linf(p, x, y, cfg);
    const auto natural = ModelLoss(p, LossKind::cross_entropy).losses(x, y);
    for (std::size_t i = 0; i < 64; ++i) {
      CHECK(out.linf_distance[i] <= eps[i] + 1e-9);
      CHECK(out.achieved_loss[i] >= natural[i] - 1e-6);
    }
    for (double v : out.x_adv.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("cw pgd") {
  const Parameters p = init_parameters(MlpSpec{3, {10}, 3}, 5);
  CounterRng rng = CounterRng::derive(33, {});
  const Tensor x = random_matrix(50, 3, rng);
  const auto y = predict_class(p, x);
  const ModelLoss cw(p, LossKind::cw_margin);
  const auto before = cw.losses(x, y);

  AttackConfig cfg = deterministic_pgd(0.0, 10);
  cfg.family = AttackFamily::cw_pgd;
  cfg.loss = LossKind::cw_margin;
  const auto zero = cw_pgd(p, x, y, cfg);
  for (std::size_t i = 0; i < 50; ++i) CHECK(zero.achieved_loss[i] == before[i]);

  cfg.epsilons = {0.05};
  const auto out = cw_pgd(p, x, y, cfg);
  for (std::size_t i = 0; i < 50; ++i) CHECK(out.achieved_loss[i] >= before[i] - 1e-6);

  // Confidently correct examples stay correct under a tiny budget.
  cfg.epsilons = {1e-6};
  const auto tiny = cw_pgd(p, x, y, cfg);
  for (std::size_t i = 0; i < 50; ++i)
    if (before[i] < -1e-3) CHECK(tiny.achieved_loss[i] < 0.0);

  cfg.loss = LossKind::cross_entropy;
  CHECK_THROWS_AS(cw_pgd(p, x, y, cfg), ValidationError);
}

TEST_CASE("spsa estimator and attack") {
  SUBCASE("gradient signs agree with the analytic quadratic gradient") {
    const std::size_t d = 12;
    CounterRng rng = CounterRng::derive(34, {});
    std::vector<double> a(d), c(d);
    for (auto& v : a) v = rng.uniform(0.5, 2.0);
    for (auto& v : c) v = rng.uniform(0.0, 1.0);
    const QuadraticLoss loss(a, c);
    const Tensor x = random_matrix(20, d, rng);
    const std::vector<int> y(20, 0);
    SpsaOptions opts;
    opts.samples = 4096;
    const Tensor est = spsa_gradient(loss, x, y, opts, 3);
    Tensor truth;
    loss.losses_and_gradient(x, y, truth);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) agree += (est[i] > 0) == (truth[i] > 0);
    CHECK(static_cast<double>(agree) / truth.size() >= 0.9);
  }
  const Parameters p = init_parameters(MlpSpec{3, {8}, 2}, 6);
  CounterRng rng = CounterRng::derive(35, {});
  const Tensor x = random_matrix(10, 3, rng);
  const auto y = random_labels(10, 2, rng);
  AttackConfig cfg;
  cfg.family = AttackFamily::spsa;
  cfg.spsa.iterations = 5;
  cfg.spsa.samples = 16;
  SUBCASE("zero budget") {
    cfg.epsilons = {0.0};
    CHECK(spsa(p, x, y, cfg).x_adv.bit_equal(x));
  }
  SUBCASE("determinism and containment") {
    cfg.seed = 4;
    const auto a = spsa(p, x, y, cfg);
    CHECK(a.x_adv.bit_equal(spsa(p, x, y, cfg).x_adv));
    for (double dist : a.linf_distance) CHECK(dist <= cfg.epsilons[0] + 1e-9);
  }
  SUBCASE("odd sample counts are rejected") {
    cfg.spsa.samples = 3;
    CHECK_THROWS_AS(spsa(p, x, y, cfg), ValidationError);
  }
}

TEST_CASE("attack config validation and dispatch") {
  AttackConfig cfg;
  cfg.steps = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = AttackConfig{};
  cfg.epsilons = {-0.1};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = AttackConfig{};
  cfg.clip_lo = 1.0;
  cfg.clip_hi = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK(parse_family("pgd") == AttackFamily::pgd);
  CHECK(parse_loss("kl") == LossKind::kl_natural);
  CHECK_THROWS_AS(parse_family("square"), ValidationError);

  const Parameters p = init_parameters(MlpSpec{2, {4}, 2}, 7);
  const Tensor x = Tensor::matrix(2, 2, {0.1, 0.2, 0.3, 0.4});
  const std::vector<int> y{0, 1};
  AttackConfig f;
  f.family = AttackFamily::fgsm;
  f.epsilons = {0.05};
  CHECK(run_attack(p, x, y, f).x_adv.bit_equal(fgsm(p, x, y, 0.05)));
  CHECK_THROWS_AS(run_attack(p, x, std::vector<int>{0}, f), ValidationError);
}
