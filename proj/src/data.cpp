#include "wpb/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "wpb/error.hpp"
#include "wpb/rng.hpp"

namespace wpb {

void Dataset::validate() const {
  if (features.rank() != 2) throw ValidationError("dataset features must be [n, d]");
  if (labels.empty()) throw ValidationError("dataset is empty");
  if (features.rows() != labels.size()) throw ValidationError("dataset feature/label counts differ");
  if (num_classes < 2) throw ValidationError("dataset needs at least 2 classes");
  for (double v : features.data())
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("dataset features must lie in [0, 1]");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw ValidationError("dataset label out of range");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = features.gather_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  out.name = name;
  out.num_classes = num_classes;
  return out;
}

MinMaxScale min_max_scale(Tensor& raw) {
  const std::size_t n = raw.rows(), d = raw.cols();
  MinMaxScale scale{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t j = 0; j < d; ++j) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t r = 0; r < n; ++r) {
      lo = std::min(lo, raw.at(r, j));
      hi = std::max(hi, raw.at(r, j));
    }
    scale.offset[j] = lo;
    scale.extent[j] = hi - lo;
    for (std::size_t r = 0; r < n; ++r) {
      double& v = raw.at(r, j);
      // A constant coordinate maps to 0; clamp absorbs the last-ulp overshoot.
      v = scale.extent[j] > 0.0 ? std::clamp((v - lo) / scale.extent[j], 0.0, 1.0) : 0.0;
    }
  }
  return scale;
}

Dataset generate_two_moons(std::size_t n, double noise_std, std::uint64_t seed) {
  if (n < 2) throw ValidationError("two moons needs at least 2 points");
  if (!(noise_std >= 0.0)) throw ValidationError("noise std must be >= 0");
  const std::size_t n_outer = (n + 1) / 2, n_inner = n / 2;
  Dataset out;
  out.name = "two_moons";
  out.num_classes = 2;
  out.features = Tensor(Shape{n, 2});
  CounterRng rng = CounterRng::derive(seed, {0x300Du});
  auto arc_param = [](std::size_t i, std::size_t count) {
    return count > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const bool outer = i < n_outer;
    const double t = outer ? arc_param(i, n_outer) : arc_param(i - n_outer, n_inner);
    const double x = outer ? std::cos(t) : 1.0 - std::cos(t);
    const double y = outer ? std::sin(t) : 0.5 - std::sin(t);
    out.features.at(i, 0) = x + noise_std * rng.normal();
    out.features.at(i, 1) = y + noise_std * rng.normal();
    out.labels.push_back(outer ? 0 : 1);
  }
  min_max_scale(out.features);
  return out;
}

Dataset generate_blobs(std::size_t n, std::size_t classes, double spread, std::uint64_t seed) {
  if (classes < 2) throw ValidationError("blobs need at least 2 classes");
  if (n < 1) throw ValidationError("blobs need at least 1 point");
  if (!(spread >= 0.0)) throw ValidationError("blob spread must be >= 0");
  Dataset out;
  out.name = "blobs";
  out.num_classes = classes;
  out.features = Tensor(Shape{n, classes});
  CounterRng rng = CounterRng::derive(seed, {0xB10Bu});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    for (std::size_t j = 0; j < classes; ++j)
      out.features.at(i, j) = (j == k ? 1.0 : 0.0) + spread * rng.normal();
    out.labels.push_back(static_cast<int>(k));
  }
  min_max_scale(out.features);
  return out;
}

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const char* what) {
  if (bytes.size() < offset + 4) throw IdxError(IdxErrorKind::truncated, std::string("truncated payload: ") + what);
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) | (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) | bytes[offset + 3];
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string hex(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  const std::uint32_t image_magic = read_be32(images, 0, "image header");
  if (image_magic != kIdxImageMagic)
    throw IdxError(IdxErrorKind::wrong_magic,
                   "wrong magic in image file: " + hex(image_magic) + " (expected " + hex(kIdxImageMagic) + ")");
  const std::uint32_t label_magic = read_be32(labels, 0, "label header");
  if (label_magic != kIdxLabelMagic)
    throw IdxError(IdxErrorKind::wrong_magic,
                   "wrong magic in label file: " + hex(label_magic) + " (expected " + hex(kIdxLabelMagic) + ")");

  const std::size_t n = read_be32(images, 4, "image header");
  const std::size_t rows = read_be32(images, 8, "image header");
  const std::size_t cols = read_be32(images, 12, "image header");
  const std::size_t n_labels = read_be32(labels, 4, "label header");
  if (n != n_labels)
    throw IdxError(IdxErrorKind::count_mismatch, "count mismatch: " + std::to_string(n) + " images but " +
                                                     std::to_string(n_labels) + " labels");
  const std::size_t pixels = rows * cols;
  if (pixels == 0) throw IdxError(IdxErrorKind::truncated, "truncated payload: images have no pixels");
  if (images.size() - 16 < n * pixels)
    throw IdxError(IdxErrorKind::truncated, "truncated payload: image file declares " + std::to_string(n) +
                                                " records but holds " + std::to_string((images.size() - 16) / pixels));
  if (labels.size() - 8 < n)
    throw IdxError(IdxErrorKind::truncated, "truncated payload: label file declares " + std::to_string(n) +
                                                " records but holds " + std::to_string(labels.size() - 8));

  Dataset out;
  out.name = "idx";
  out.features = Tensor(Shape{n, pixels});
  for (std::size_t i = 0; i < n * pixels; ++i) out.features[i] = static_cast<double>(images[16 + i]) / 255.0;
  int max_label = 1;
  for (std::size_t i = 0; i < n; ++i) {
    out.labels.push_back(labels[8 + i]);
    max_label = std::max(max_label, out.labels.back());
  }
  out.num_classes = static_cast<std::size_t>(max_label) + 1;
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = slurp(images_path);
  const auto labels = slurp(labels_path);
  return parse_idx(images, labels);
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& data, std::size_t rows, std::size_t cols) {
  if (rows * cols != data.dim()) throw ValidationError("image dims do not match dataset width");
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  for (double v : data.features.data()) out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& data) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) out.push_back(static_cast<std::uint8_t>(y));
  return out;
}

std::vector<std::vector<std::size_t>> shuffle_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                      std::uint64_t epoch) {
  if (batch_size < 1) throw ValidationError("batch size must be at least 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng = CounterRng::derive(seed, {0x5AFFu, epoch});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace wpb
