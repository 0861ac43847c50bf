#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "baae/error.hpp"

namespace baae {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Dense row-major array of doubles. Rank 0 is a scalar, rank 1 a vector,
/// rank 2 a matrix; matrix operations require rank 2.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  /// Scalar zero.
  Tensor() : values_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != element_count(shape_)) {
      throw ShapeError("tensor: shape " + shape_string(shape_) + " needs " +
                       std::to_string(element_count(shape_)) + " values, got " +
                       std::to_string(values_.size()));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor vector(std::initializer_list<double> v) {
    return Tensor(Shape{v.size()}, std::vector<double>(v));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor(Shape{rows, cols}, fill);
  }

  /// Row-major matrix from nested lists: `Tensor::matrix({{1, 2}, {3, 4}})`.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(v));
  }

  static Tensor from_eigen(const RowMatrix& m) {
    Tensor t = matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    t.as_matrix() = m;
    return t;
  }

  static std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
  }

  static std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::string shape_string() const { return shape_string(shape_); }

  /// Rows of a rank-2 tensor; 1 for lower ranks.
  std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
  /// Columns of a rank-2 tensor; element count for lower ranks.
  std::size_t cols() const noexcept { return shape_.size() == 2 ? shape_[1] : values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols() + c]; }

  /// Scalar value of a single-element tensor.
  double item() const {
    if (values_.size() != 1) throw ShapeError("tensor: item() on " + shape_string());
    return values_[0];
  }

  MatrixMap as_matrix() noexcept {
    return MatrixMap(values_.data(), static_cast<Eigen::Index>(rows()),
                     static_cast<Eigen::Index>(cols()));
  }
  ConstMatrixMap as_matrix() const noexcept {
    return ConstMatrixMap(values_.data(), static_cast<Eigen::Index>(rows()),
                          static_cast<Eigen::Index>(cols()));
  }

  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(values_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) noexcept {
    return std::span<double>(values_).subspan(r * cols(), cols());
  }

  /// Rows `indices` of a rank-2 tensor, in that order.
  Tensor gather_rows(std::span<const std::size_t> indices) const {
    Tensor out = matrix(indices.size(), cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const auto src = row(indices[i]);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  /// Bitwise equality of shape and values.
  friend bool operator==(const Tensor& a, const Tensor& b) noexcept {
    if (a.shape_ != b.shape_) return false;
    for (std::size_t i = 0; i < a.values_.size(); ++i) {
      if (std::bit_cast<std::uint64_t>(a.values_[i]) != std::bit_cast<std::uint64_t>(b.values_[i]))
        return false;
    }
    return true;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace baae
