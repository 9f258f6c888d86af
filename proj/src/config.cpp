#include "wpb/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>

#include <algorithm>
#include <cmath>

#include "wpb/error.hpp"
#include "wpb/rng.hpp"

namespace wpb {

using nlohmann::json;

double parse_fraction(std::string_view text) {
  auto parse_number = [&](std::string_view part) {
    const std::string s(part);
    if (s.empty()) throw ValidationError("empty number in '" + std::string(text) + "'");
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
      throw ValidationError("cannot parse number '" + std::string(text) + "'");
    return v;
  };
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return parse_number(text);
  const double num = parse_number(text.substr(0, slash));
  const double den = parse_number(text.substr(slash + 1));
  if (den == 0.0) throw ValidationError("zero denominator in '" + std::string(text) + "'");
  return num / den;
}

std::vector<double> parse_fraction_list(std::string_view text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string_view::npos ? text.size() : comma;
    out.push_back(parse_fraction(text.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
}

double number_or_fraction(const json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_fraction(v.get<std::string>());
  throw ValidationError(key + " must be a number or a fraction string");
}

template <typename T>
T get(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + "." + key + " has the wrong type");
  }
}

template <typename T>
void read(const json& obj, const std::string& key, T& out, const std::string& where) {
  if (obj.contains(key)) out = get<T>(obj, key, where);
}

void read_real(const json& obj, const std::string& key, double& out, const std::string& where) {
  if (obj.contains(key)) out = number_or_fraction(obj.at(key), where + "." + key);
}

void read_count(const json& obj, const std::string& key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ValidationError(where + "." + key + " must be a non-negative integer");
  out = v.get<std::size_t>();
}

DatasetSpec parse_dataset(const json& obj) {
  reject_unknown(obj, {"kind", "n_train", "n_test", "noise", "classes", "spread", "train_images", "train_labels",
                       "test_images", "test_labels"},
                 "dataset");
  DatasetSpec d;
  read(obj, "kind", d.kind, "dataset");
  read_count(obj, "n_train", d.n_train, "dataset");
  read_count(obj, "n_test", d.n_test, "dataset");
  read_real(obj, "noise", d.noise, "dataset");
  read_count(obj, "classes", d.classes, "dataset");
  read_real(obj, "spread", d.spread, "dataset");
  read(obj, "train_images", d.train_images, "dataset");
  read(obj, "train_labels", d.train_labels, "dataset");
  read(obj, "test_images", d.test_images, "dataset");
  read(obj, "test_labels", d.test_labels, "dataset");
  if (d.kind == "two_moons") {
    if (d.n_train < 2) throw ValidationError("two_moons needs n_train >= 2");
    if (!(d.noise >= 0.0)) throw ValidationError("dataset.noise must be >= 0");
  } else if (d.kind == "blobs") {
    if (d.n_train < 1) throw ValidationError("blobs need n_train >= 1");
    if (d.classes < 2) throw ValidationError("blobs need classes >= 2");
    if (!(d.spread >= 0.0)) throw ValidationError("dataset.spread must be >= 0");
  } else if (d.kind == "idx") {
    if (d.train_images.empty() || d.train_labels.empty())
      throw ValidationError("idx dataset needs train_images and train_labels");
    if (d.test_images.empty() != d.test_labels.empty())
      throw ValidationError("idx test split needs both test_images and test_labels");
  } else {
    throw ValidationError("unknown dataset kind '" + d.kind + "' (expected two_moons, blobs or idx)");
  }
  return d;
}

TrainConfig parse_train(const json& obj) {
  reject_unknown(obj, {"epochs", "warmup_epochs", "eps", "method", "alpha", "objective", "beta", "pgd_steps",
                       "init_noise_std", "lr", "lr_milestones", "momentum", "weight_decay", "batch_size", "eps_cap",
                       "eval_steps"},
                 "train");
  TrainConfig t;
  read(obj, "epochs", t.epochs, "train");
  read(obj, "warmup_epochs", t.warmup_epochs, "train");
  read_real(obj, "eps", t.base_eps, "train");
  if (obj.contains("method")) t.method = parse_method(get<std::string>(obj, "method", "train"));
  read_real(obj, "alpha", t.alpha, "train");
  if (obj.contains("objective")) t.objective = parse_objective(get<std::string>(obj, "objective", "train"));
  read_real(obj, "beta", t.trades_beta, "train");
  read(obj, "pgd_steps", t.pgd_steps, "train");
  read_real(obj, "init_noise_std", t.init_noise_std, "train");
  read_real(obj, "lr", t.lr0, "train");
  if (obj.contains("lr_milestones")) {
    const auto& list = obj.at("lr_milestones");
    if (!list.is_array()) throw ValidationError("train.lr_milestones must be a list of [epoch, divisor]");
    for (const auto& m : list) {
      if (!m.is_array() || m.size() != 2 || !m[0].is_number_integer())
        throw ValidationError("train.lr_milestones entries must be [epoch, divisor]");
      t.lr_milestones.push_back({m[0].get<int>(), number_or_fraction(m[1], "train.lr_milestones")});
    }
  }
  read_real(obj, "momentum", t.momentum, "train");
  read_real(obj, "weight_decay", t.weight_decay, "train");
  read_count(obj, "batch_size", t.batch_size, "train");
  if (obj.contains("eps_cap") && !obj.at("eps_cap").is_null())
    t.eps_cap = number_or_fraction(obj.at("eps_cap"), "train.eps_cap");
  read(obj, "eval_steps", t.eval_steps, "train");
  return t;
}

NamedAttack parse_attack(const json& obj, std::size_t index) {
  const std::string where = "attacks[" + std::to_string(index) + "]";
  reject_unknown(obj, {"name", "family", "eps", "steps", "step_size", "init_noise_std", "loss", "spsa", "seed"},
                 where);
  NamedAttack a;
  a.name = "attack" + std::to_string(index);
  read(obj, "name", a.name, where);
  AttackConfig& c = a.config;
  if (obj.contains("family")) c.family = parse_family(get<std::string>(obj, "family", where));
  if (c.family == AttackFamily::cw_pgd) c.loss = LossKind::cw_margin;
  if (obj.contains("eps")) c.epsilons = {number_or_fraction(obj.at("eps"), where + ".eps")};
  read(obj, "steps", c.steps, where);
  if (obj.contains("step_size")) c.step_sizes = {number_or_fraction(obj.at("step_size"), where + ".step_size")};
  read_real(obj, "init_noise_std", c.init_noise_std, where);
  if (obj.contains("loss")) c.loss = parse_loss(get<std::string>(obj, "loss", where));
  read(obj, "seed", c.seed, where);
  if (obj.contains("spsa")) {
    const auto& s = obj.at("spsa");
    reject_unknown(s, {"iterations", "perturbation", "learning_rate", "samples"}, where + ".spsa");
    read(s, "iterations", c.spsa.iterations, where + ".spsa");
    read_real(s, "perturbation", c.spsa.perturbation, where + ".spsa");
    read_real(s, "learning_rate", c.spsa.learning_rate, where + ".spsa");
    read(s, "samples", c.spsa.samples, where + ".spsa");
  }
  if (c.family == AttackFamily::cw_pgd && c.loss != LossKind::cw_margin)
    throw ValidationError(where + ": the cw family needs the cw loss");
  c.validate();
  return a;
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  reject_unknown(doc, {"seed", "output_dir", "dataset", "model", "train", "attacks"}, "run config");
  RunConfig cfg;
  read(doc, "seed", cfg.seed, "run config");
  read(doc, "output_dir", cfg.output_dir, "run config");
  if (doc.contains("dataset")) cfg.dataset = parse_dataset(doc.at("dataset"));
  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    reject_unknown(m, {"hidden"}, "model");
    read(m, "hidden", cfg.hidden, "model");
    for (std::size_t w : cfg.hidden)
      if (w < 1) throw ValidationError("model.hidden widths must be positive");
  }
  if (doc.contains("train")) cfg.train = parse_train(doc.at("train"));
  cfg.train.seed = cfg.seed;
  cfg.train.validate();
  if (doc.contains("attacks")) {
    const auto& list = doc.at("attacks");
    if (!list.is_array()) throw ValidationError("attacks must be a list");
    for (std::size_t i = 0; i < list.size(); ++i) cfg.attacks.push_back(parse_attack(list[i], i));
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

json to_json(const RunConfig& cfg) {
  json milestones = json::array();
  for (const auto& m : cfg.train.lr_milestones) milestones.push_back({m.epoch, m.divisor});
  json attacks = json::array();
  for (const auto& [name, c] : cfg.attacks) {
    json a = {{"name", name},
              {"family", family_name(c.family)},
              {"eps", c.epsilons.front()},
              {"steps", c.steps},
              {"init_noise_std", c.init_noise_std},
              {"loss", loss_name(c.loss)},
              {"seed", c.seed},
              {"spsa",
               {{"iterations", c.spsa.iterations},
                {"perturbation", c.spsa.perturbation},
                {"learning_rate", c.spsa.learning_rate},
                {"samples", c.spsa.samples}}}};
    if (!c.step_sizes.empty()) a["step_size"] = c.step_sizes.front();
    attacks.push_back(std::move(a));
  }
  const auto& d = cfg.dataset;
  json dataset = {{"kind", d.kind}, {"n_train", d.n_train}, {"n_test", d.n_test}};
  if (d.kind == "two_moons") dataset["noise"] = d.noise;
  if (d.kind == "blobs") {
    dataset["classes"] = d.classes;
    dataset["spread"] = d.spread;
  }
  if (d.kind == "idx") {
    dataset = {{"kind", d.kind}, {"train_images", d.train_images}, {"train_labels", d.train_labels}};
    if (!d.test_images.empty()) {
      dataset["test_images"] = d.test_images;
      dataset["test_labels"] = d.test_labels;
    }
  }
  const auto& t = cfg.train;
  json train = {{"epochs", t.epochs},
                {"warmup_epochs", t.warmup_epochs},
                {"eps", t.base_eps},
                {"method", method_name(t.method)},
                {"alpha", t.alpha},
                {"objective", objective_name(t.objective)},
                {"beta", t.trades_beta},
                {"pgd_steps", t.pgd_steps},
                {"init_noise_std", t.init_noise_std},
                {"lr", t.lr0},
                {"lr_milestones", milestones},
                {"momentum", t.momentum},
                {"weight_decay", t.weight_decay},
                {"batch_size", t.batch_size},
                {"eps_cap", t.eps_cap ? json(*t.eps_cap) : json(nullptr)},
                {"eval_steps", t.eval_steps}};
  return {{"seed", cfg.seed},
          {"output_dir", cfg.output_dir},
          {"dataset", dataset},
          {"model", {{"hidden", cfg.hidden}}},
          {"train", train},
          {"attacks", attacks}};
}

DataSplits make_datasets(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  const std::uint64_t train_seed = CounterRng::derive(cfg.seed, {0xDA7Au, 0}).next_u64();
  const std::uint64_t test_seed = CounterRng::derive(cfg.seed, {0xDA7Au, 1}).next_u64();
  DataSplits out;
  if (d.kind == "two_moons") {
    out.train = generate_two_moons(d.n_train, d.noise, train_seed);
    if (d.n_test >= 2) {
      out.test = generate_two_moons(d.n_test, d.noise, test_seed);
      out.has_test = true;
    }
  } else if (d.kind == "blobs") {
    out.train = generate_blobs(d.n_train, d.classes, d.spread, train_seed);
    if (d.n_test >= 1) {
      out.test = generate_blobs(d.n_test, d.classes, d.spread, test_seed);
      out.has_test = true;
    }
  } else {
    out.train = load_idx(d.train_images, d.train_labels);
    if (!d.test_images.empty()) {
      out.test = load_idx(d.test_images, d.test_labels);
      out.has_test = true;
      const std::size_t classes = std::max(out.train.num_classes, out.test.num_classes);
      out.train.num_classes = out.test.num_classes = classes;
    }
  }
  out.train.validate();
  if (out.has_test) out.test.validate();
  return out;
}

MlpSpec model_spec(const RunConfig& cfg, const Dataset& train) {
  MlpSpec spec{train.dim(), cfg.hidden, train.num_classes};
  spec.validate();
  return spec;
}

}  // namespace wpb
