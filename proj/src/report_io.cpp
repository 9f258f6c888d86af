#include "wpb/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wpb/error.hpp"

namespace wpb {

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string metrics_csv(std::span<const EpochMetrics> log) {
  std::ostringstream out;
  out << "epoch,lr,nat_loss,adv_loss,nat_acc,rob_acc,eps_min,eps_mean,eps_max\n";
  for (const auto& m : log)
    out << m.epoch << ',' << format_real(m.lr) << ',' << format_real(m.nat_loss) << ',' << format_real(m.adv_loss)
        << ',' << format_real(m.nat_acc) << ',' << format_real(m.rob_acc) << ',' << format_real(m.eps_min) << ','
        << format_real(m.eps_mean) << ',' << format_real(m.eps_max) << '\n';
  return out.str();
}

std::string batches_csv(std::span<const BatchRecord> batches) {
  std::ostringstream out;
  out << "epoch,batch,warmup,eps_min,eps_max,kappa_min,kappa_max\n";
  for (const auto& b : batches)
    out << b.epoch << ',' << b.batch << ',' << (b.warmup ? 1 : 0) << ',' << format_real(b.eps_min) << ','
        << format_real(b.eps_max) << ',' << format_real(b.kappa_min) << ',' << format_real(b.kappa_max) << '\n';
  return out.str();
}

std::string radii_csv(std::span<const double> scores, std::span<const double> epsilons) {
  if (scores.size() != epsilons.size()) throw ValidationError("radii_csv: scores and epsilons differ in length");
  std::ostringstream out;
  out << "example_id,score,epsilon_i,kappa_i\n";
  for (std::size_t i = 0; i < scores.size(); ++i)
    out << i << ',' << format_real(scores[i]) << ',' << format_real(epsilons[i]) << ','
        << format_real(step_size(epsilons[i])) << '\n';
  return out.str();
}

std::string radii_csv(const RadiusAssignment& a) {
  std::ostringstream out;
  out << "example_id,score,epsilon_i,kappa_i\n";
  for (std::size_t i = 0; i < a.size(); ++i)
    out << i << ',' << format_real(a.scores[i]) << ',' << format_real(a.epsilons[i]) << ','
        << format_real(a.kappas[i]) << '\n';
  return out.str();
}

std::string robustness_csv(const RobustnessReport& report) {
  std::ostringstream out;
  out << "attack,family,loss,eps,steps,n,natural_accuracy,robust_accuracy,mean_adv_loss\n";
  for (const auto& a : report.attacks)
    out << a.name << ',' << family_name(a.config.family) << ',' << loss_name(a.config.loss) << ','
        << format_real(a.config.epsilons.front()) << ',' << a.config.steps << ',' << report.n << ','
        << format_real(report.natural_accuracy) << ',' << format_real(a.robust_accuracy) << ','
        << format_real(a.mean_adv_loss) << '\n';
  return out.str();
}

std::string theorem_json(const TheoremReport& report) {
  // Stats go through format_real so the text is stable across json versions.
  std::ostringstream out;
  out << "{\n  \"theorem\": " << nlohmann::json(report.theorem).dump() << ",\n  \"n\": " << report.n
      << ",\n  \"fraction\": " << format_real(report.fraction) << ",\n  \"excluded\": " << report.excluded
      << ",\n  \"stats\": {";
  bool first = true;
  for (const auto& [key, value] : report.stats) {
    out << (first ? "\n" : ",\n") << "    " << nlohmann::json(key).dump() << ": ";
    if (std::isfinite(value))
      out << format_real(value);
    else
      out << "null";
    first = false;
  }
  out << (first ? "}" : "\n  }") << "\n}\n";
  return out.str();
}

std::string histogram_csv(const RadiiHistogram& hist) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b)
    out << format_real(hist.edges[b]) << ',' << format_real(hist.edges[b + 1]) << ',' << hist.counts[b] << '\n';
  return out.str();
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "alpha,natural_accuracy,robust_accuracy,eps_min,eps_mean,eps_max\n";
  for (const auto& r : rows)
    out << format_real(r.alpha) << ',' << format_real(r.natural_accuracy) << ',' << format_real(r.robust_accuracy)
        << ',' << format_real(r.eps_min) << ',' << format_real(r.eps_mean) << ',' << format_real(r.eps_max) << '\n';
  return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw RuntimeError("failed writing " + path.string());
}

}  // namespace wpb
