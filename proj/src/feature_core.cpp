#include "ldfs/feature_core.hpp"

#include <algorithm>
#include <cmath>

#include "ldfs/kernels.hpp"

namespace ldfs {

UnitVector UnitVector::from_unit(std::span<const double> components) {
  if (!is_unit(components)) {
    throw DegenerateEmbedding("vector is not unit length (norm " + std::to_string(l2_norm(components)) + ")");
  }
  return UnitVector(Vector(components.begin(), components.end()));
}

UnitVector normalize(std::span<const double> v) {
  Vector out(v.begin(), v.end());
  normalize_in_place(out);
  return UnitVector(std::move(out));
}

void normalize_in_place(std::span<double> v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateEmbedding("cannot normalize a zero or non-finite embedding");
  kernels::scale(1.0 / n, v.data(), v.size());
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionMismatch("cosine: dimensions " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  return std::clamp(kernels::dot(u.data(), v.data(), u.size()), -1.0, 1.0);
}

double cosine(const UnitVector& u, const UnitVector& v) { return cosine(u.components(), v.components()); }

bool is_unit(std::span<const double> v, double tolerance) {
  const double n = l2_norm(v);
  return std::isfinite(n) && std::abs(n - 1.0) <= tolerance;
}

void FeatureMatrix::add_row(std::span<const double> v, int label, int domain, std::string instance_id) {
  if (v.size() != dim_) {
    throw DimensionMismatch("row has dimension " + std::to_string(v.size()) + ", expected " + std::to_string(dim_));
  }
  if (!raw_ && !is_unit(v)) throw DegenerateEmbedding("row '" + instance_id + "' is not unit length");
  data_.insert(data_.end(), v.begin(), v.end());
  labels_.push_back(label);
  domains_.push_back(domain);
  ids_.push_back(std::move(instance_id));
}

void FeatureMatrix::set_class_names(std::vector<std::string> names) { class_names_ = std::move(names); }
void FeatureMatrix::set_domain_names(std::vector<std::string> names) { domain_names_ = std::move(names); }

namespace {
int index_of(const std::vector<std::string>& names, std::string_view name) {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}
}  // namespace

int FeatureMatrix::class_index(std::string_view name) const { return index_of(class_names_, name); }
int FeatureMatrix::domain_index(std::string_view name) const { return index_of(domain_names_, name); }

FeatureMatrix FeatureMatrix::empty_like() const {
  FeatureMatrix out(dim_, raw_);
  out.class_names_ = class_names_;
  out.domain_names_ = domain_names_;
  return out;
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> indices) const {
  FeatureMatrix out = empty_like();
  out.data_.reserve(indices.size() * dim_);
  for (std::size_t i : indices) {
    const auto r = row(i);
    out.data_.insert(out.data_.end(), r.begin(), r.end());
    out.labels_.push_back(labels_[i]);
    out.domains_.push_back(domains_[i]);
    out.ids_.push_back(ids_[i]);
  }
  return out;
}

std::vector<std::size_t> FeatureMatrix::rows_in_domain(int domain) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (domains_[i] == domain) out.push_back(i);
  }
  return out;
}

FeatureMatrix FeatureMatrix::domain_subset(int domain) const {
  const auto idx = rows_in_domain(domain);
  return select(idx);
}

void FeatureMatrix::append(const FeatureMatrix& other) {
  if (other.empty()) return;
  if (empty() && dim_ == 0) dim_ = other.dim_;
  if (other.dim_ != dim_) throw DimensionMismatch("append: dimension mismatch");
  if (other.raw_ && !raw_) throw DegenerateEmbedding("append: cannot mix raw rows into a normalized matrix");
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
  domains_.insert(domains_.end(), other.domains_.begin(), other.domains_.end());
  ids_.insert(ids_.end(), other.ids_.begin(), other.ids_.end());
}

Matrix FeatureMatrix::to_matrix() const {
  Matrix m(size(), dim_);
  std::copy(data_.begin(), data_.end(), m.values().begin());
  return m;
}

ClassTextBank::ClassTextBank(std::vector<std::string> class_names, Matrix embeddings)
    : names_(std::move(class_names)), embeddings_(std::move(embeddings)) {
  if (names_.size() != embeddings_.rows()) {
    throw DimensionMismatch("class text bank: " + std::to_string(names_.size()) + " names but " +
                            std::to_string(embeddings_.rows()) + " embeddings");
  }
  for (std::size_t c = 0; c < embeddings_.rows(); ++c) {
    if (!is_unit(embeddings_.row(c))) throw DegenerateEmbedding("class text embedding '" + names_[c] + "' is not unit length");
  }
}

ClassTextBank ClassTextBank::from_raw(std::vector<std::string> class_names, const Matrix& raw_rows) {
  Matrix rows = raw_rows;
  for (std::size_t c = 0; c < rows.rows(); ++c) normalize_in_place(rows.row(c));
  return ClassTextBank(std::move(class_names), std::move(rows));
}

Vector centroid(const Matrix& rows) {
  Vector c(rows.cols(), 0.0);
  for (std::size_t i = 0; i < rows.rows(); ++i) kernels::axpy(1.0, rows.row(i).data(), c.data(), c.size());
  if (rows.rows() > 0) kernels::scale(1.0 / static_cast<double>(rows.rows()), c.data(), c.size());
  return c;
}

double modality_gap(const Matrix& images, const Matrix& texts) {
  if (images.empty() || texts.empty()) throw Error("modality_gap: empty set");
  if (images.cols() != texts.cols()) throw DimensionMismatch("modality_gap: dimension mismatch");
  const Vector ci = centroid(images);
  const Vector ct = centroid(texts);
  return std::sqrt(kernels::squared_distance(ci.data(), ct.data(), ci.size()));
}

double modality_gap(const FeatureMatrix& images, const FeatureMatrix& texts) {
  return modality_gap(images.to_matrix(), texts.to_matrix());
}

}  // namespace ldfs
