#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "wpb/analysis.hpp"
#include "wpb/training.hpp"
#include "wpb/vulnerability.hpp"

namespace wpb {

/// Shortest text that reads back to the same double ("%.17g").
std::string format_real(double value);

std::string metrics_csv(std::span<const EpochMetrics> log);
std::string batches_csv(std::span<const BatchRecord> batches);
/// example_id, score, epsilon_i, kappa_i; kappa_i is epsilon_i / 4.
std::string radii_csv(std::span<const double> scores, std::span<const double> epsilons);
std::string radii_csv(const RadiusAssignment& assignment);
std::string robustness_csv(const RobustnessReport& report);
std::string theorem_json(const TheoremReport& report);
std::string histogram_csv(const RadiiHistogram& hist);
std::string sweep_csv(std::span<const SweepRow> rows);

/// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace wpb
