#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wpb/error.hpp"
#include "wpb/tensor.hpp"

namespace wpb {

/// Labelled examples with every feature in [0, 1].
struct Dataset {
  Tensor features;  // [n, d]
  std::vector<int> labels;
  std::string name;
  std::size_t num_classes = 2;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Two interleaved half circles plus Gaussian noise, min-max scaled into
/// [0, 1]^2. Class 0 gets the extra point when n is odd.
Dataset generate_two_moons(std::size_t n, double noise_std, std::uint64_t seed);

/// One Gaussian cluster per class around the standard simplex vertices e_k
/// in R^C, min-max scaled into [0, 1]^C. Classes are assigned round-robin.
Dataset generate_blobs(std::size_t n, std::size_t classes, double spread, std::uint64_t seed);

/// Affine map that generate_two_moons applied per coordinate:
/// scaled = (raw - offset) / extent.
struct MinMaxScale {
  std::vector<double> offset;
  std::vector<double> extent;
};
/// Scales `raw` in place and returns the map it used.
MinMaxScale min_max_scale(Tensor& raw);

enum class IdxErrorKind { io, wrong_magic, truncated, count_mismatch };

class IdxError : public RuntimeError {
 public:
  IdxError(IdxErrorKind kind, const std::string& what) : RuntimeError(what), kind_(kind) {}
  IdxErrorKind kind() const { return kind_; }

 private:
  IdxErrorKind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses an MNIST-style IDX pair. Pixels are divided by 255; the class
/// count is max(label) + 1, at least 2.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);

/// Serializes a dataset whose pixels are multiples of 1/255 back into IDX bytes.
std::vector<std::uint8_t> encode_idx_images(const Dataset& data, std::size_t rows, std::size_t cols);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& data);

/// Example indices in batches, permuted by a Fisher-Yates shuffle keyed by
/// (seed, epoch). The last batch may be short.
std::vector<std::vector<std::size_t>> shuffle_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                      std::uint64_t epoch);

}  // namespace wpb
