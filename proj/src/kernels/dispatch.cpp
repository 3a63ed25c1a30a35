#include <cstdlib>
#include <string_view>

#include "ldfs/kernels.hpp"

namespace ldfs::kernels {

namespace detail {
#if !(defined(__x86_64__) || defined(_M_X64))
const KernelTable* avx2_table_if_built() { return nullptr; }
#endif
#if !(defined(__aarch64__) || defined(_M_ARM64))
const KernelTable* neon_table_if_built() { return nullptr; }
#endif
}  // namespace detail

namespace {

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
      // Advanced SIMD is mandatory on AArch64.
#if defined(__aarch64__) || defined(_M_ARM64)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& select() {
  if (const char* forced = std::getenv("LDFS_KERNELS"); forced != nullptr && std::string_view(forced) == "scalar") {
    return scalar_table();
  }
  if (const KernelTable* t = table_for(Isa::avx2)) return *t;
  if (const KernelTable* t = table_for(Isa::neon)) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable* table_for(Isa isa) {
  if (!cpu_has(isa)) return nullptr;
  switch (isa) {
    case Isa::scalar:
      return &scalar_table();
    case Isa::avx2:
      return detail::avx2_table_if_built();
    case Isa::neon:
      return detail::neon_table_if_built();
  }
  return nullptr;
}

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

}  // namespace ldfs::kernels
