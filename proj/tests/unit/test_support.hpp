#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "ldfs/feature_core.hpp"

namespace ldfs::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ldfs-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Matrix matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.begin()->size();
  Matrix m(rows.size(), cols);
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

/// Normalized rows with labels and domains; ids "r<i>".
inline FeatureMatrix features(std::initializer_list<std::initializer_list<double>> rows, std::vector<int> labels,
                              std::vector<int> domains, std::size_t classes = 0, std::size_t n_domains = 0) {
  FeatureMatrix f(rows.begin()->size());
  std::size_t i = 0;
  for (const auto& row : rows) {
    Vector v(row);
    normalize_in_place(v);
    f.add_row(v, labels[i], domains[i], "r" + std::to_string(i));
    ++i;
  }
  std::vector<std::string> cn, dn;
  for (std::size_t c = 0; c < classes; ++c) cn.push_back("c" + std::to_string(c));
  for (std::size_t k = 0; k < n_domains; ++k) dn.push_back("d" + std::to_string(k));
  if (classes) f.set_class_names(cn);
  if (n_domains) f.set_domain_names(dn);
  return f;
}

}  // namespace ldfs::test
