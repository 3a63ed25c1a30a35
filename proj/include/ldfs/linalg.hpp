#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ldfs {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, 0.0);
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// out = a * b, with a: n x k, b: k x m. `out` is resized.
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out = a^T * b, with a: n x k, b: n x m -> k x m.
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T, with a: n x k, b: m x k -> n x m.
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);

// Same products against a row-major weight block held in a flat span
// (used for mapper parameters, which live in one contiguous vector).
void matmul(const Matrix& a, std::span<const double> b, std::size_t b_cols, Matrix& out);
void matmul_nt(const Matrix& a, std::span<const double> b, std::size_t b_rows, Matrix& out);
void matmul_tn_accumulate(const Matrix& a, const Matrix& b, std::span<double> out);

}  // namespace ldfs
