#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace wpb {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. A rank-0 tensor holds one scalar.
class Tensor {
 public:
  Tensor() : Tensor(Shape{0}) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  /// Rows/cols of a rank-2 tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

  /// Row r of a rank-2 tensor, as a view.
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  /// Copy of the selected rows of a rank-2 tensor, in the given order.
  Tensor gather_rows(std::span<const std::size_t> indices) const;

  Tensor reshaped(Shape shape) const;

  /// Scalar value of a single-element tensor.
  double item() const;

  bool all_finite() const;

  /// Shape and every bit of every element equal.
  bool bit_equal(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Value kernels shared by eager code and the recording tape.
namespace ops {

Shape broadcast_shape(const Shape& a, const Shape& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor negate(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor exp(const Tensor& a);
Tensor sum(const Tensor& a);
/// Reductions over the last axis that keep it as extent 1.
Tensor sum_last(const Tensor& a);
Tensor max_last(const Tensor& a);
Tensor log_sum_exp(const Tensor& a);
Tensor transpose(const Tensor& a);
/// Sums a broadcast gradient back down to the operand's shape.
Tensor reduce_to_shape(const Tensor& grad, const Shape& target);

}  // namespace ops

}  // namespace wpb
