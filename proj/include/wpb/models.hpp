#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wpb/autodiff.hpp"
#include "wpb/rng.hpp"
#include "wpb/tensor.hpp"

namespace wpb {

/// Fully connected ReLU classifier: input_dim -> hidden... -> num_classes.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t num_classes = 0;

  void validate() const;
  /// input_dim, hidden..., num_classes.
  std::vector<std::size_t> layer_dims() const;

  bool operator==(const MlpSpec&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Weights are stored [fan_in, fan_out] so a batch multiplies as x * W.
/// Entries alternate weight, bias per layer: layer0.weight, layer0.bias, ...
struct Parameters {
  std::vector<NamedTensor> entries;

  std::size_t size() const { return entries.size(); }
  std::size_t layer_count() const { return entries.size() / 2; }
  const Tensor& weight(std::size_t layer) const { return entries.at(2 * layer).value; }
  const Tensor& bias(std::size_t layer) const { return entries.at(2 * layer + 1).value; }
  std::size_t input_dim() const { return weight(0).dim(0); }
  std::size_t num_classes() const { return bias(layer_count() - 1).size(); }

  /// Checks that the shapes chain into a valid classifier.
  void validate() const;
  bool bit_equal(const Parameters& other) const;
};

/// Glorot-uniform weights drawn from a Philox stream keyed by (seed, layer); zero biases.
Parameters init_parameters(const MlpSpec& spec, std::uint64_t seed);
Parameters zero_parameters(const MlpSpec& spec);
MlpSpec spec_of(const Parameters& params);

/// Logits for every row of x [batch, input_dim].
Tensor forward_logits(const Parameters& params, const Tensor& x);

/// Records the forward pass on a tape. `param_vars` holds one leaf per
/// parameter entry, in order (see record_parameters).
Var forward_logits(Tape& tape, std::span<const Var> param_vars, Var x);
std::vector<Var> record_parameters(Tape& tape, const Parameters& params);
/// Forward with the parameters as constants; only x is differentiable.
Var forward_logits(Tape& tape, const Parameters& params, Var x);

/// Arg-max class per row. Ties go to the smallest index.
std::vector<int> predict_class(const Parameters& params, const Tensor& x);
std::vector<int> argmax_rows(const Tensor& logits);

struct Checkpoint {
  MlpSpec spec;
  Parameters params;
  std::uint32_t epoch = 0;
  RngState rng;

  bool bit_equal(const Checkpoint& other) const;
};

inline constexpr char kCheckpointMagic[8] = {'B', 'A', 'T', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wpb
