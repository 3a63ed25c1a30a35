#pragma once

// Inner-loop arithmetic kernels.
//
// Every kernel has a scalar reference implementation plus SIMD variants
// (AVX2+FMA on x86-64, NEON on aarch64). The variant used by the library is
// chosen once at startup from the host CPU; setting LDFS_KERNELS=scalar in the
// environment forces the reference path.

#include <cstddef>
#include <string_view>

namespace ldfs::kernels {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();

/// Table for `isa`, or nullptr when that variant is not compiled in or the
/// running CPU lacks the instructions.
const KernelTable* table_for(Isa isa);

/// The table selected for this process.
const KernelTable& active();

std::string_view isa_name(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void scale(double alpha, double* x, std::size_t n) { active().scale(alpha, x, n); }
inline double squared_distance(const double* a, const double* b, std::size_t n) {
  return active().squared_distance(a, b, n);
}

namespace detail {
const KernelTable* avx2_table_if_built();
const KernelTable* neon_table_if_built();
}  // namespace detail

}  // namespace ldfs::kernels
