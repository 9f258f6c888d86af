#include "wpb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>

#include "wpb/error.hpp"

namespace wpb {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ValidationError("tensor shape " + shape_string(shape_) + " does not match " +
                          std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return vector(std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ValidationError("expected a matrix, got shape " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ValidationError("expected a matrix, got shape " + shape_string(shape_));
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  const std::size_t c = cols();
  Tensor out(Shape{indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= shape_[0]) throw ValidationError("row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * c), c,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

double Tensor::item() const {
  if (data_.size() != 1) throw ValidationError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::bit_equal(const Tensor& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

namespace ops {

namespace {

// Strides of `in` viewed inside the broadcast output shape; broadcast axes get 0.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t in_axis = in.size() - 1 - k;
    const std::size_t out_axis = out.size() - 1 - k;
    strides[out_axis] = in[in_axis] == 1 ? 0 : stride;
    stride *= in[in_axis];
  }
  return strides;
}

template <typename Fn>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, Fn fn) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor out(out_shape);
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(a[i], b[i]);
    return out;
  }
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<std::size_t> index(out_shape.size(), 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    out[flat] = fn(a[ia], b[ib]);
    for (std::size_t axis = out_shape.size(); axis-- > 0;) {
      ++index[axis];
      ia += sa[axis];
      ib += sb[axis];
      if (index[axis] < out_shape[axis]) break;
      ia -= sa[axis] * index[axis];
      ib -= sb[axis] * index[axis];
      index[axis] = 0;
    }
  }
  return out;
}

template <typename Fn>
Tensor unary(const Tensor& a, Fn fn) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
  return out;
}

std::size_t last_extent(const Tensor& a, const char* op) {
  if (a.rank() == 0) throw ValidationError(std::string(op) + " needs rank >= 1");
  const std::size_t n = a.shape().back();
  if (n == 0) throw ValidationError(std::string(op) + " over an empty axis");
  return n;
}

Shape keep_last(const Shape& s) {
  Shape out = s;
  out.back() = 1;
  return out;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t ea = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t eb = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw ValidationError("shapes " + shape_string(a) + " and " + shape_string(b) +
                            " are not broadcast-compatible");
    }
    out[rank - 1 - k] = ea == 1 ? eb : ea;
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ValidationError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                          shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out(Shape{m, n});
  // i-k-j order; every output element accumulates in ascending k from 0.0,
  // so a row's result does not depend on the other rows in the batch.
  for (std::size_t i = 0; i < m; ++i) {
    double* out_row = out.data().data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* b_row = b.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aip * b_row[j];
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return broadcast_binary(a, b, std::plus<double>{});
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return broadcast_binary(a, b, std::multiplies<double>{});
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor negate(const Tensor& a) {
  return unary(a, [](double v) { return -v; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double v) { return v * factor; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double v) { return std::exp(v); });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tensor::scalar(total);
}

Tensor sum_last(const Tensor& a) {
  const std::size_t n = last_extent(a, "sum_last");
  Tensor out(keep_last(a.shape()));
  for (std::size_t r = 0; r < out.size(); ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += a[r * n + j];
    out[r] = total;
  }
  return out;
}

Tensor max_last(const Tensor& a) {
  const std::size_t n = last_extent(a, "max_last");
  Tensor out(keep_last(a.shape()));
  for (std::size_t r = 0; r < out.size(); ++r) {
    double best = a[r * n];
    for (std::size_t j = 1; j < n; ++j) best = std::max(best, a[r * n + j]);
    out[r] = best;
  }
  return out;
}

Tensor log_sum_exp(const Tensor& a) {
  const std::size_t n = last_extent(a, "log_sum_exp");
  Tensor out(keep_last(a.shape()));
  for (std::size_t r = 0; r < out.size(); ++r) {
    double shift = a[r * n];
    for (std::size_t j = 1; j < n; ++j) shift = std::max(shift, a[r * n + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(a[r * n + j] - shift);
    out[r] = shift + std::log(total);
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

Tensor reduce_to_shape(const Tensor& grad, const Shape& target) {
  if (grad.shape() == target) return grad;
  Tensor out(target);
  const auto strides = broadcast_strides(target, grad.shape());
  const Shape& gshape = grad.shape();
  std::vector<std::size_t> index(gshape.size(), 0);
  std::size_t it = 0;
  for (std::size_t flat = 0; flat < grad.size(); ++flat) {
    out[it] += grad[flat];
    for (std::size_t axis = gshape.size(); axis-- > 0;) {
      ++index[axis];
      it += strides[axis];
      if (index[axis] < gshape[axis]) break;
      it -= strides[axis] * index[axis];
      index[axis] = 0;
    }
  }
  return out;
}

}  // namespace ops

}  // namespace wpb
