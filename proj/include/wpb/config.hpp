#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "wpb/analysis.hpp"
#include "wpb/data.hpp"
#include "wpb/training.hpp"

namespace wpb {

/// Parses "8/255" exactly as 8.0 / 255.0, or a plain decimal.
double parse_fraction(std::string_view text);
/// Comma-separated list of parse_fraction values.
std::vector<double> parse_fraction_list(std::string_view text);

struct DatasetSpec {
  std::string kind = "two_moons";  // two_moons | blobs | idx
  std::size_t n_train = 1000;
  std::size_t n_test = 500;
  double noise = 0.1;
  std::size_t classes = 10;
  double spread = 0.3;
  std::string train_images, train_labels, test_images, test_labels;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DatasetSpec dataset;
  std::vector<std::size_t> hidden{64, 64};
  TrainConfig train;
  std::vector<NamedAttack> attacks;
};

struct DataSplits {
  Dataset train;
  Dataset test;
  bool has_test = false;
};

/// Strict parse: unknown keys, wrong types and invalid values are errors.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

DataSplits make_datasets(const RunConfig& cfg);
MlpSpec model_spec(const RunConfig& cfg, const Dataset& train);

}  // namespace wpb
