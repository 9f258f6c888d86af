#include "wpb/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "wpb/error.hpp"
#include "wpb/functional.hpp"
#include "wpb/rng.hpp"

namespace wpb {

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::cross_entropy: return "ce";
    case LossKind::cw_margin: return "cw";
    case LossKind::kl_natural: return "kl";
  }
  return "unknown";
}

LossKind parse_loss(const std::string& name) {
  if (name == "ce" || name == "cross-entropy") return LossKind::cross_entropy;
  if (name == "cw" || name == "cw-margin") return LossKind::cw_margin;
  if (name == "kl") return LossKind::kl_natural;
  throw ValidationError("unknown loss '" + name + "' (expected ce, cw or kl)");
}

const char* family_name(AttackFamily family) {
  switch (family) {
    case AttackFamily::fgsm: return "fgsm";
    case AttackFamily::pgd: return "pgd";
    case AttackFamily::cw_pgd: return "cw";
    case AttackFamily::spsa: return "spsa";
  }
  return "unknown";
}

AttackFamily parse_family(const std::string& name) {
  if (name == "fgsm") return AttackFamily::fgsm;
  if (name == "pgd") return AttackFamily::pgd;
  if (name == "cw" || name == "cw-pgd") return AttackFamily::cw_pgd;
  if (name == "spsa") return AttackFamily::spsa;
  throw ValidationError("unknown attack family '" + name + "' (expected fgsm, pgd, cw or spsa)");
}

ModelLoss::ModelLoss(const Parameters& params, LossKind kind, std::optional<Tensor> reference_logits)
    : params_(params), kind_(kind), reference_(std::move(reference_logits)) {
  if (kind_ == LossKind::kl_natural && !reference_)
    throw ValidationError("kl loss needs the natural logits of the batch");
}

namespace {

Var record_loss(Tape& tape, const Parameters& params, LossKind kind, const std::optional<Tensor>& reference,
                Var x, std::span<const int> labels) {
  const Var logits = forward_logits(tape, params, x);
  switch (kind) {
    case LossKind::cross_entropy: return cross_entropy_rows(tape, logits, labels);
    case LossKind::cw_margin: return cw_margin_rows(tape, logits, labels);
    case LossKind::kl_natural:
      if (reference->shape() != tape.value(logits).shape())
        throw ValidationError("kl reference logits do not match the batch");
      return kl_divergence_rows(tape, tape.leaf(*reference), logits);
  }
  throw ValidationError("unknown loss kind");
}

std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

std::vector<double> ModelLoss::losses(const Tensor& x, std::span<const int> labels) const {
  Tape tape;
  const Var xv = tape.leaf(x);
  return to_vector(tape.value(record_loss(tape, params_, kind_, reference_, xv, labels)));
}

std::vector<double> ModelLoss::losses_and_gradient(const Tensor& x, std::span<const int> labels,
                                                   Tensor& grad) const {
  Tape tape;
  const Var xv = tape.leaf(x);
  const Var per_row = record_loss(tape, params_, kind_, reference_, xv, labels);
  // Rows are independent, so the gradient of the sum is the per-row gradient.
  const Var wrt[] = {xv};
  grad = tape.backward(tape.sum(per_row), wrt)[0];
  return to_vector(tape.value(per_row));
}

LinearLoss::LinearLoss(Tensor weights, double bias) : weights_(std::move(weights)), bias_(bias) {
  if (weights_.rank() != 1) throw ValidationError("linear loss weights must be a vector");
}

std::vector<double> LinearLoss::losses(const Tensor& x, std::span<const int>) const {
  if (x.rank() != 2 || x.cols() != weights_.size())
    throw ValidationError("input shape " + shape_string(x.shape()) + " does not match linear loss width " +
                          std::to_string(weights_.size()));
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double total = bias_;
    const auto row = x.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) total += weights_[j] * row[j];
    out[r] = total;
  }
  return out;
}

std::vector<double> LinearLoss::losses_and_gradient(const Tensor& x, std::span<const int> labels,
                                                    Tensor& grad) const {
  auto out = losses(x, labels);
  grad = Tensor(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) std::copy(weights_.data().begin(), weights_.data().end(), grad.row(r).begin());
  return out;
}

void AttackConfig::validate() const {
  if (epsilons.empty()) throw ValidationError("attack needs at least one budget");
  for (double e : epsilons)
    if (!(e >= 0.0) || !std::isfinite(e)) throw ValidationError("attack budgets must be finite and >= 0");
  for (double s : step_sizes)
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("attack step sizes must be finite and >= 0");
  if (steps < 1) throw ValidationError("attack needs K >= 1 steps, got " + std::to_string(steps));
  if (!(init_noise_std >= 0.0)) throw ValidationError("init noise std must be >= 0");
  if (!(clip_lo <= clip_hi)) throw ValidationError("clip range is empty");
  if (family == AttackFamily::spsa) {
    if (spsa.samples < 2 || spsa.samples % 2 != 0)
      throw ValidationError("SPSA sample count must be even and positive, got " + std::to_string(spsa.samples));
    if (spsa.iterations < 1) throw ValidationError("SPSA needs at least one iteration");
    if (!(spsa.perturbation > 0.0)) throw ValidationError("SPSA perturbation must be positive");
    if (!(spsa.learning_rate >= 0.0)) throw ValidationError("SPSA learning rate must be >= 0");
  }
}

namespace {

std::vector<double> per_example(std::span<const double> values, std::size_t n, const char* what) {
  if (values.size() == 1) return std::vector<double>(n, values[0]);
  if (values.size() != n)
    throw ValidationError(std::string(what) + " has " + std::to_string(values.size()) +
                          " entries for a batch of " + std::to_string(n));
  return {values.begin(), values.end()};
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void clip_in_place(Tensor& t, double lo, double hi) {
  for (double& v : t.data()) v = std::clamp(v, lo, hi);
}

void check_batch(const Tensor& x, std::span<const int> labels) {
  if (x.rank() != 2) throw ValidationError("attack input must be [n, d], got " + shape_string(x.shape()));
  if (labels.size() != x.rows()) throw ValidationError("label count does not match batch size");
}

// x + noise, projected and clipped. Noise for row i comes from its own stream.
Tensor noisy_start(const Tensor& x, const std::vector<double>& eps, const AttackConfig& cfg) {
  Tensor start = x;
  if (cfg.init_noise_std > 0.0) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
      CounterRng rng = CounterRng::derive(cfg.seed, {0x9015Eu, r});
      for (double& v : start.row(r)) v += cfg.init_noise_std * rng.normal();
    }
  }
  start = project_linf(start, x, eps);
  clip_in_place(start, cfg.clip_lo, cfg.clip_hi);
  return start;
}

AdversarialBatch finish(const ExampleLoss& loss, const Tensor& x, Tensor x_adv, std::span<const int> labels) {
  AdversarialBatch out;
  out.achieved_loss = loss.losses(x_adv, labels);
  out.linf_distance = linf_distance(x_adv, x);
  out.x_adv = std::move(x_adv);
  return out;
}

AdversarialBatch sign_ascent(const ExampleLoss& loss, const Tensor& x, std::span<const int> labels,
                             const AttackConfig& cfg) {
  cfg.validate();
  check_batch(x, labels);
  const std::size_t n = x.rows();
  const auto eps = per_example(cfg.epsilons, n, "epsilons");
  std::vector<double> kappa;
  if (cfg.step_sizes.empty()) {
    for (double e : eps) kappa.push_back(e / 4.0);
  } else {
    kappa = per_example(cfg.step_sizes, n, "step_sizes");
  }

  Tensor x_adv = noisy_start(x, eps, cfg);
  Tensor grad;
  for (int step = 0; step < cfg.steps; ++step) {
    loss.losses_and_gradient(x_adv, labels, grad);
    for (std::size_t r = 0; r < n; ++r) {
      auto row = x_adv.row(r);
      const auto g = grad.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += kappa[r] * sign(g[j]);
    }
    x_adv = project_linf(x_adv, x, eps);
    clip_in_place(x_adv, cfg.clip_lo, cfg.clip_hi);
  }
  return finish(loss, x, std::move(x_adv), labels);
}

}  // namespace

Tensor project_linf(const Tensor& candidate, const Tensor& center, double eps) {
  if (candidate.shape() != center.shape())
    throw ValidationError("projection shape mismatch: " + shape_string(candidate.shape()) + " vs " +
                          shape_string(center.shape()));
  Tensor out(candidate.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(candidate[i], center[i] - eps, center[i] + eps);
  return out;
}

Tensor project_linf(const Tensor& candidate, const Tensor& center, std::span<const double> eps) {
  if (candidate.shape() != center.shape())
    throw ValidationError("projection shape mismatch: " + shape_string(candidate.shape()) + " vs " +
                          shape_string(center.shape()));
  const auto budgets = per_example(eps, candidate.rows(), "epsilons");
  Tensor out(candidate.shape());
  const std::size_t d = candidate.cols();
  for (std::size_t r = 0; r < candidate.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      out[i] = std::clamp(candidate[i], center[i] - budgets[r], center[i] + budgets[r]);
    }
  return out;
}

std::vector<double> linf_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ValidationError("distance shape mismatch");
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ra = a.row(r), rb = b.row(r);
    for (std::size_t j = 0; j < ra.size(); ++j) out[r] = std::max(out[r], std::abs(ra[j] - rb[j]));
  }
  return out;
}

Tensor fgsm(const ExampleLoss& loss, const Tensor& x, std::span<const int> labels, std::span<const double> eps,
            double clip_lo, double clip_hi) {
  check_batch(x, labels);
  const auto budgets = per_example(eps, x.rows(), "epsilons");
  for (double e : budgets)
    if (!(e >= 0.0)) throw ValidationError("FGSM budget must be >= 0");
  Tensor grad;
  loss.losses_and_gradient(x, labels, grad);
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = out.row(r);
    const auto g = grad.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::clamp(row[j] + budgets[r] * sign(g[j]), clip_lo, clip_hi);
  }
  return out;
}

Tensor fgsm(const Parameters& params, const Tensor& x, std::span<const int> labels, double eps) {
  const double budgets[] = {eps};
  return fgsm(ModelLoss(params, LossKind::cross_entropy), x, labels, budgets);
}

AdversarialBatch pgd_linf(const ExampleLoss& loss, const Tensor& x, std::span<const int> labels,
                          const AttackConfig& cfg) {
  if (cfg.family != AttackFamily::pgd && cfg.family != AttackFamily::cw_pgd)
    throw ValidationError("pgd_linf needs a pgd attack config");
  return sign_ascent(loss, x, labels, cfg);
}

AdversarialBatch pgd_linf(const Parameters& params, const Tensor& x, std::span<const int> labels,
                          const AttackConfig& cfg) {
  if (cfg.loss == LossKind::kl_natural) {
    return pgd_linf(ModelLoss(params, cfg.loss, forward_logits(params, x)), x, labels, cfg);
  }
  return pgd_linf(ModelLoss(params, cfg.loss), x, labels, cfg);
}

AdversarialBatch cw_pgd(const Parameters& params, const Tensor& x, std::span<const int> labels,
                        const AttackConfig& cfg) {
  if (cfg.loss != LossKind::cw_margin) throw ValidationError("cw_pgd needs the cw margin loss");
  return sign_ascent(ModelLoss(params, LossKind::cw_margin), x, labels, cfg);
}

Tensor spsa_gradient(const ExampleLoss& loss, const Tensor& x, std::span<const int> labels,
                     const SpsaOptions& opts, std::uint64_t seed, std::uint64_t iteration) {
  check_batch(x, labels);
  if (opts.samples < 2 || opts.samples % 2 != 0)
    throw ValidationError("SPSA sample count must be even and positive, got " + std::to_string(opts.samples));
  const std::size_t n = x.rows(), d = x.cols();
  const int pairs = opts.samples / 2;
  std::vector<CounterRng> streams;
  for (std::size_t r = 0; r < n; ++r) streams.push_back(CounterRng::derive(seed, {0x5B5Au, r, iteration}));

  Tensor estimate(x.shape());
  Tensor probe(x.shape()), plus(x.shape()), minus(x.shape());
  for (int p = 0; p < pairs; ++p) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) probe[r * d + j] = streams[r].rademacher();
    for (std::size_t i = 0; i < x.size(); ++i) {
      plus[i] = x[i] + opts.perturbation * probe[i];
      minus[i] = x[i] - opts.perturbation * probe[i];
    }
    const auto up = loss.losses(plus, labels);
    const auto down = loss.losses(minus, labels);
    for (std::size_t r = 0; r < n; ++r) {
      const double slope = (up[r] - down[r]) / (2.0 * opts.perturbation);
      // Rademacher entries are their own inverse.
      for (std::size_t j = 0; j < d; ++j) estimate[r * d + j] += slope * probe[r * d + j];
    }
  }
  return ops::scale(estimate, 1.0 / pairs);
}

AdversarialBatch spsa(const ExampleLoss& loss, const Tensor& x, std::span<const int> labels,
                      const AttackConfig& cfg) {
  cfg.validate();
  check_batch(x, labels);
  const auto eps = per_example(cfg.epsilons, x.rows(), "epsilons");
  Tensor x_adv = noisy_start(x, eps, cfg);
  for (int it = 0; it < cfg.spsa.iterations; ++it) {
    const Tensor g = spsa_gradient(loss, x_adv, labels, cfg.spsa, cfg.seed, static_cast<std::uint64_t>(it));
    for (std::size_t i = 0; i < x_adv.size(); ++i) x_adv[i] += cfg.spsa.learning_rate * sign(g[i]);
    x_adv = project_linf(x_adv, x, eps);
    clip_in_place(x_adv, cfg.clip_lo, cfg.clip_hi);
  }
  return finish(loss, x, std::move(x_adv), labels);
}

AdversarialBatch spsa(const Parameters& params, const Tensor& x, std::span<const int> labels,
                      const AttackConfig& cfg) {
  if (cfg.loss == LossKind::kl_natural) {
    return spsa(ModelLoss(params, cfg.loss, forward_logits(params, x)), x, labels, cfg);
  }
  return spsa(ModelLoss(params, cfg.loss), x, labels, cfg);
}

AdversarialBatch run_attack(const Parameters& params, const Tensor& x, std::span<const int> labels,
                            const AttackConfig& cfg) {
  cfg.validate();
  switch (cfg.family) {
    case AttackFamily::fgsm: {
      const ModelLoss loss(params, cfg.loss == LossKind::kl_natural ? LossKind::cross_entropy : cfg.loss);
      Tensor x_adv = fgsm(loss, x, labels, cfg.epsilons, cfg.clip_lo, cfg.clip_hi);
      return finish(loss, x, std::move(x_adv), labels);
    }
    case AttackFamily::pgd: return pgd_linf(params, x, labels, cfg);
    case AttackFamily::cw_pgd: return cw_pgd(params, x, labels, cfg);
    case AttackFamily::spsa: return spsa(params, x, labels, cfg);
  }
  throw ValidationError("unknown attack family");
}

}  // namespace wpb
