#include "ldfs/linalg.hpp"

#include <cmath>

#include "ldfs/error.hpp"
#include "ldfs/kernels.hpp"

namespace ldfs {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("dot: dimension mismatch");
  return kernels::dot(a.data(), b.data(), a.size());
}

double l2_norm(std::span<const double> v) { return std::sqrt(kernels::dot(v.data(), v.data(), v.size())); }

void matmul(const Matrix& a, std::span<const double> b, std::size_t b_cols, Matrix& out) {
  const std::size_t k = a.cols();
  if (b.size() != k * b_cols) throw DimensionMismatch("matmul: inner dimensions differ");
  out.resize(a.rows(), b_cols);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    const auto src = a.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      if (src[p] != 0.0) kernels::axpy(src[p], b.data() + p * b_cols, dst.data(), b_cols);
    }
  }
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  matmul(a, b.values(), b.cols(), out);
}

void matmul_nt(const Matrix& a, std::span<const double> b, std::size_t b_rows, Matrix& out) {
  const std::size_t k = a.cols();
  if (b.size() != b_rows * k) throw DimensionMismatch("matmul_nt: inner dimensions differ");
  out.resize(a.rows(), b_rows);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* src = a.row(i).data();
    for (std::size_t j = 0; j < b_rows; ++j) out(i, j) = kernels::dot(src, b.data() + j * k, k);
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.cols()) throw DimensionMismatch("matmul_nt: inner dimensions differ");
  matmul_nt(a, b.values(), b.rows(), out);
}

void matmul_tn_accumulate(const Matrix& a, const Matrix& b, std::span<double> out) {
  if (a.rows() != b.rows() || out.size() != a.cols() * b.cols()) {
    throw DimensionMismatch("matmul_tn: shapes differ");
  }
  const std::size_t m = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto lhs = a.row(r);
    const double* rhs = b.row(r).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      if (lhs[p] != 0.0) kernels::axpy(lhs[p], rhs, out.data() + p * m, m);
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  out.resize(a.cols(), b.cols());
  matmul_tn_accumulate(a, b, out.values());
}

}  // namespace ldfs
