#pragma once

#include <cmath>
#include <vector>

#include "wpb/data.hpp"
#include "wpb/models.hpp"
#include "wpb/rng.hpp"
#include "wpb/tensor.hpp"

namespace wpb::testing {

inline Tensor random_matrix(std::size_t rows, std::size_t cols, CounterRng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(Shape{rows, cols});
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, CounterRng& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(classes));
  return y;
}

inline Dataset random_dataset(std::size_t n, std::size_t d, std::size_t classes, std::uint64_t seed) {
  CounterRng rng = CounterRng::derive(seed, {77});
  Dataset data;
  data.features = random_matrix(n, d, rng);
  data.labels = random_labels(n, classes, rng);
  data.num_classes = classes;
  data.name = "random";
  return data;
}

/// Relative tolerance, or an absolute one when both values are near zero.
inline bool close_rel(double a, double b, double rel, double abs_tol, double near_zero = 1e-3) {
  const double diff = std::abs(a - b);
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale < near_zero ? diff <= abs_tol : diff <= rel * scale;
}

}  // namespace wpb::testing
