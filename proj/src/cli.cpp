#include "wpb/cli.hpp"

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "wpb/analysis.hpp"
#include "wpb/config.hpp"
#include "wpb/error.hpp"
#include "wpb/report_io.hpp"

namespace wpb {
namespace {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::string split = "test";
  std::string init = "zero";
};

RunConfig load_config(const CommonOptions& o) {
  return o.config.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(o.config);
}

const Dataset& pick_split(const DataSplits& data, const std::string& split) {
  if (split == "train") return data.train;
  if (split != "test") throw ValidationError("--split must be train or test");
  if (!data.has_test) throw ValidationError("the configured dataset has no test split");
  return data.test;
}

/// Checkpoint weights when given, otherwise an untrained model; "zero" makes
/// every prediction uniform.
Parameters model_for(const CommonOptions& o, const RunConfig& cfg, const Dataset& data) {
  const MlpSpec expected = model_spec(cfg, data);
  if (o.checkpoint.empty()) {
    if (o.init == "zero") return zero_parameters(expected);
    if (o.init == "random") return init_parameters(expected, cfg.seed);
    throw ValidationError("--init must be zero or random");
  }
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (ckpt.spec.input_dim != data.dim() || ckpt.spec.num_classes != data.num_classes)
    throw ValidationError("checkpoint shape does not match the configured dataset");
  return std::move(ckpt.params);
}

void emit(const CommonOptions& o, const std::string& text) {
  if (o.out.empty())
    std::cout << text << std::flush;
  else
    write_text_file(o.out, text);
}

std::vector<NamedAttack> attacks_or_default(const RunConfig& cfg) {
  if (!cfg.attacks.empty()) return cfg.attacks;
  return {{"pgd" + std::to_string(cfg.train.eval_steps),
           evaluation_pgd(cfg.train.base_eps, cfg.train.eval_steps, cfg.seed)}};
}

int run_train(const CommonOptions& o, const std::string& output_override) {
  RunConfig cfg = load_config(o);
  if (!output_override.empty()) cfg.output_dir = output_override;
  const DataSplits data = make_datasets(cfg);
  const MlpSpec spec = model_spec(cfg, data.train);
  const auto attacks = attacks_or_default(cfg);
  for (const auto& a : attacks)
    if (a.config.epsilons.size() != 1) throw ValidationError("report attacks need one shared budget");

  const TrainingResult result = run_training(cfg.train, spec, data.train, data.has_test ? &data.test : nullptr);

  const fs::path dir = cfg.output_dir;
  write_text_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
  write_text_file(dir / "metrics.csv", metrics_csv(result.log));
  write_text_file(dir / "radii.csv", radii_csv(result.best_scores, result.best_epsilons));
  write_text_file(dir / "reports" / "batches.csv", batches_csv(result.batches));
  fs::create_directories(dir / "checkpoints");
  save_checkpoint(result.best_checkpoint, dir / "checkpoints" / "best.ckpt");
  save_checkpoint(result.final_checkpoint, dir / "checkpoints" / "final.ckpt");

  const Dataset& eval_set = data.has_test ? data.test : data.train;
  const RobustnessReport report = evaluate(result.best_checkpoint.params, eval_set, attacks);
  write_text_file(dir / "reports" / "robustness.csv", robustness_csv(report));

  nlohmann::json summary = {{"best_epoch", result.best_epoch},
                            {"epochs", cfg.train.epochs},
                            {"eval_split", data.has_test ? "test" : "train"},
                            {"natural_accuracy", format_real(report.natural_accuracy)}};
  nlohmann::json holdout = nlohmann::json::array();
  for (double v : result.holdout_robust_accuracy) holdout.push_back(format_real(v));
  summary["holdout_robust_accuracy"] = holdout;
  for (const auto& a : report.attacks) summary["robust_accuracy"][a.name] = format_real(a.robust_accuracy);
  write_text_file(dir / "reports" / "training.json", summary.dump(2) + "\n");
  return 0;
}

int run_eval(const CommonOptions& o) {
  const RunConfig cfg = load_config(o);
  if (o.checkpoint.empty()) throw ValidationError("eval needs --checkpoint");
  const auto attacks = attacks_or_default(cfg);
  const DataSplits data = make_datasets(cfg);
  const Dataset& set = pick_split(data, o.split);
  const Parameters params = model_for(o, cfg, set);
  emit(o, robustness_csv(evaluate(params, set, attacks)));
  return 0;
}

struct BudgetOptions {
  std::string method;
  std::optional<double> alpha;
  std::string eps;
};

RadiusAssignment assign_for(const CommonOptions& o, const BudgetOptions& b, const RunConfig& cfg) {
  const ReweightMethod method = b.method.empty() ? cfg.train.method : parse_method(b.method);
  const double alpha = b.alpha.value_or(cfg.train.alpha);
  const double eps = b.eps.empty() ? cfg.train.base_eps : parse_fraction(b.eps);
  if (!(eps > 0.0)) throw ValidationError("--eps must be positive");
  const DataSplits data = make_datasets(cfg);
  const Dataset& set = pick_split(data, o.split);
  const Parameters params = model_for(o, cfg, set);
  return assign_batch(params, set.features, set.labels, method, alpha, eps, cfg.train.eps_cap);
}

int run_assign(const CommonOptions& o, const BudgetOptions& b) {
  emit(o, radii_csv(assign_for(o, b, load_config(o))));
  return 0;
}

int run_hist(const CommonOptions& o, const BudgetOptions& b, std::size_t bins) {
  if (bins < 1) throw ValidationError("--bins must be >= 1");
  const RadiusAssignment a = assign_for(o, b, load_config(o));
  emit(o, histogram_csv(radii_histogram(a.epsilons, bins)));
  return 0;
}

struct VerifyOptions {
  std::string theorem;
  std::string eps;
  double min_gap = 0.5;
  std::size_t pairs = 200;
  int steps = 20;
  double band = 0.01;
};

int run_verify(const CommonOptions& o, const VerifyOptions& v) {
  const RunConfig cfg = load_config(o);
  if (v.theorem != "1" && v.theorem != "2" && v.theorem != "lemma1")
    throw ValidationError("--theorem must be 1, 2 or lemma1");
  std::vector<double> eps = v.eps.empty() ? std::vector<double>{} : parse_fraction_list(v.eps);
  for (double e : eps)
    if (!(e > 0.0)) throw ValidationError("--eps values must be positive");
  if (v.theorem != "2" && eps.size() > 1) throw ValidationError("this check takes a single --eps value");
  const DataSplits data = make_datasets(cfg);
  const Dataset& set = pick_split(data, o.split);
  const Parameters params = model_for(o, cfg, set);
  TheoremReport report;
  if (v.theorem == "1") {
    report = verify_theorem1(params, set, eps.empty() ? cfg.train.base_eps : eps[0], v.min_gap, v.pairs, cfg.seed);
  } else if (v.theorem == "2") {
    if (eps.empty()) eps = {2.0 / 255.0, 4.0 / 255.0, 8.0 / 255.0, 12.0 / 255.0};
    report = verify_theorem2(params, set, eps, v.steps);
  } else {
    report = verify_lemma1(params, set, eps.empty() ? 1e-3 : eps[0], v.band);
  }
  emit(o, theorem_json(report));
  return 0;
}

int run_sweep(const CommonOptions& o, const std::string& alphas_text) {
  const RunConfig cfg = load_config(o);
  const std::vector<double> alphas = parse_fraction_list(alphas_text);
  const auto attacks = attacks_or_default(cfg);
  const DataSplits data = make_datasets(cfg);
  if (!data.has_test) throw ValidationError("sweep needs a test split");
  const MlpSpec spec = model_spec(cfg, data.train);
  emit(o, sweep_csv(sweep_alpha(cfg.train, spec, alphas, data.train, data.test, attacks.front().config)));
  return 0;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_checkpoint) {
  cmd->add_option("--config", o.config, "run configuration (JSON)");
  if (with_checkpoint) {
    cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint; omitted means an untrained model");
    cmd->add_option("--init", o.init, "untrained model weights: zero or random")->check(CLI::IsMember({"zero", "random"}));
    cmd->add_option("--split", o.split, "dataset split: train or test")->check(CLI::IsMember({"train", "test"}));
  }
  cmd->add_option("--out", o.out, "output file; stdout when omitted");
}

void add_budget(CLI::App* cmd, BudgetOptions& b) {
  cmd->add_option("--method", b.method, "fixed, mwpb or sdwpb");
  cmd->add_option("--alpha", b.alpha, "reweighting strength");
  cmd->add_option("--eps", b.eps, "base budget, e.g. 8/255");
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Vulnerability-aware perturbation budgets for adversarial training", "wpb"};
  app.require_subcommand(1);

  CommonOptions common;
  BudgetOptions budget;
  VerifyOptions verify;
  std::string output_dir;
  std::string alphas;
  std::size_t bins = 20;

  auto* train = app.add_subcommand("train", "train a model and write the run directory");
  train->add_option("--config", common.config, "run configuration (JSON)");
  train->add_option("--output-dir", output_dir, "overrides output_dir from the config");

  auto* eval = app.add_subcommand("eval", "robust accuracy of a checkpoint under the configured attacks");
  add_common(eval, common, true);

  auto* assign = app.add_subcommand("assign", "per-example scores and budgets as CSV");
  add_common(assign, common, true);
  add_budget(assign, budget);

  auto* ver = app.add_subcommand("verify", "first-order ordering and monotonicity checks as JSON");
  add_common(ver, common, true);
  ver->add_option("--theorem", verify.theorem, "1, 2 or lemma1")->required();
  ver->add_option("--eps", verify.eps, "budget, or comma-separated budgets for the monotonicity check");
  ver->add_option("--min-gap", verify.min_gap, "minimum natural-loss gap between paired examples");
  ver->add_option("--pairs", verify.pairs, "number of example pairs");
  ver->add_option("--steps", verify.steps, "PGD steps for the monotonicity check");
  ver->add_option("--band", verify.band, "tolerance band around ratio 1");

  auto* sweep = app.add_subcommand("sweep", "train once per alpha and tabulate accuracies");
  add_common(sweep, common, false);
  sweep->add_option("--alphas", alphas, "comma-separated alpha values")->required();

  auto* hist = app.add_subcommand("hist", "histogram of per-example budgets as CSV");
  add_common(hist, common, true);
  add_budget(hist, budget);
  hist->add_option("--bins", bins, "number of bins");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*train) return run_train(common, output_dir);
    if (*eval) return run_eval(common);
    if (*assign) return run_assign(common, budget);
    if (*ver) return run_verify(common, verify);
    if (*sweep) return run_sweep(common, alphas);
    if (*hist) return run_hist(common, budget, bins);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace wpb
