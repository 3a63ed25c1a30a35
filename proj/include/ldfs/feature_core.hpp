#pragma once

// Embedding vectors, labelled feature sets and the similarity primitives
// every other module builds on.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ldfs/error.hpp"
#include "ldfs/linalg.hpp"

namespace ldfs {

/// Absolute tolerance on the L2 norm of anything called a unit vector.
inline constexpr double kUnitTolerance = 1e-5;

/// Label value for rows without a class.
inline constexpr int kUnlabeled = -1;

/// An L2-normalized embedding.
class UnitVector {
 public:
  UnitVector() = default;

  /// Wraps components that are already unit length; throws
  /// DegenerateEmbedding if the norm is off by more than kUnitTolerance.
  static UnitVector from_unit(std::span<const double> components);

  std::span<const double> components() const noexcept { return v_; }
  std::size_t dim() const noexcept { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }

  friend bool operator==(const UnitVector&, const UnitVector&) = default;

 private:
  friend UnitVector normalize(std::span<const double> v);
  explicit UnitVector(Vector v) : v_(std::move(v)) {}
  Vector v_;
};

/// v / ||v||. Throws DegenerateEmbedding on a zero (or non-finite) vector.
UnitVector normalize(std::span<const double> v);

/// Divides `v` by its norm in place. Same errors as normalize().
void normalize_in_place(std::span<double> v);

/// Dot product of two unit vectors clamped to [-1, 1].
double cosine(const UnitVector& u, const UnitVector& v);
double cosine(std::span<const double> u, std::span<const double> v);

bool is_unit(std::span<const double> v, double tolerance = kUnitTolerance);

/// N x d embeddings with a class label, domain tag and instance id per row.
///
/// Rows must be unit vectors unless the matrix was created raw (mapper
/// outputs before normalization). Class and domain names are carried along
/// so subsets and caches stay self-describing.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t dim, bool raw = false) : dim_(dim), raw_(raw) {}

  void add_row(std::span<const double> v, int label, int domain, std::string instance_id);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  bool raw() const noexcept { return raw_; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  UnitVector unit_row(std::size_t i) const { return UnitVector::from_unit(row(i)); }
  int label(std::size_t i) const { return labels_[i]; }
  int domain(std::size_t i) const { return domains_[i]; }
  const std::string& instance_id(std::size_t i) const { return ids_[i]; }

  std::span<const double> values() const noexcept { return data_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<int>& domain_tags() const noexcept { return domains_; }
  const std::vector<std::string>& instance_ids() const noexcept { return ids_; }

  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  const std::vector<std::string>& domain_names() const noexcept { return domain_names_; }
  void set_class_names(std::vector<std::string> names);
  void set_domain_names(std::vector<std::string> names);
  /// Index of a name, or -1.
  int class_index(std::string_view name) const;
  int domain_index(std::string_view name) const;

  /// Rows at `indices`, in that order, with the same metadata.
  FeatureMatrix select(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> rows_in_domain(int domain) const;
  FeatureMatrix domain_subset(int domain) const;
  /// Appends all rows of `other` (dimension and raw flag must agree).
  void append(const FeatureMatrix& other);
  /// Copy of the metadata with no rows.
  FeatureMatrix empty_like() const;

  /// Rows as a dense matrix.
  Matrix to_matrix() const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t dim_ = 0;
  bool raw_ = false;
  std::vector<double> data_;
  std::vector<int> labels_;
  std::vector<int> domains_;
  std::vector<std::string> ids_;
  std::vector<std::string> class_names_;
  std::vector<std::string> domain_names_;
};

/// One unit-norm text embedding per class (the encoded class prompts).
class ClassTextBank {
 public:
  ClassTextBank() = default;
  /// Rows must already be unit length.
  ClassTextBank(std::vector<std::string> class_names, Matrix embeddings);
  /// Normalizes each row first.
  static ClassTextBank from_raw(std::vector<std::string> class_names, const Matrix& raw_rows);

  std::size_t size() const noexcept { return names_.size(); }
  std::size_t dim() const noexcept { return embeddings_.cols(); }
  const std::vector<std::string>& class_names() const noexcept { return names_; }
  const Matrix& embeddings() const noexcept { return embeddings_; }
  std::span<const double> row(std::size_t c) const { return embeddings_.row(c); }

 private:
  std::vector<std::string> names_;
  Matrix embeddings_;
};

/// Euclidean distance between the centroid of the image rows and the
/// centroid of the text rows.
double modality_gap(const FeatureMatrix& images, const FeatureMatrix& texts);
double modality_gap(const Matrix& images, const Matrix& texts);

Vector centroid(const Matrix& rows);

}  // namespace ldfs
