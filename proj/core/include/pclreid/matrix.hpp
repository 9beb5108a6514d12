#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pclreid {

/// Dense row-major matrix of doubles. One row per sample throughout the library.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of `data`; throws ShapeError unless data.size() == rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using FeatureMatrix = Matrix;

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> v);

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);
/// [a | b], row counts must agree.
Matrix concat_cols(const Matrix& a, const Matrix& b);
/// Columns [begin, end) of m.
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end);

/// out += scale * in, elementwise.
void axpy(double scale, std::span<const double> in, std::span<double> out);

}  // namespace pclreid
