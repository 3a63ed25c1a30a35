#pragma once

// Synthetic benchmark with a known generating transform.
//
// An orthonormal basis of R^d holds one direction per class (mu_c), one per
// domain (nu_k) and one modality direction (m). The remaining subspace is
// split into two blocks: one holds per-class attribute directions a_cj, the
// other per-(domain, class) interaction directions w_kcj, which model how an
// attribute looks in one particular domain. Both sets are orthonormal within
// a class (or cell) while the block has room. An image of class c in domain k
// with attribute j is
//
//   Norm(mu_c + rho nu_k + s (lambda a_cj + kappa w_kcj + eta xi)),
//
// xi isotropic noise, and the text embedding of "<domain k template for c>,
// <attribute j>." is the same point without xi, shifted by offset * m. A
// plain template drops the attribute terms; an attribute phrase on its own
// embeds at Norm(a_cj + offset m).
//
// Text for target domain k may also lean towards one class: every domain-k
// sentence gets text_class_bias * mu_b(k) added, b(k) drawn per fixture. The
// source domain and the class prompts carry no bias.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldfs/feature_core.hpp"
#include "ldfs/text_engine.hpp"

namespace ldfs {

struct ToyFixtureOptions {
  std::size_t classes = 3;
  std::size_t domains = 3;  // domain 0 is the source
  std::size_t dim = 32;
  std::size_t samples_per_cell = 64;
  std::size_t attributes_per_class = 16;
  double domain_shift = 0.8;          // rho
  double dispersion = 1.0;            // s; 0 puts every sample at its cell centroid
  double attribute_strength = 0.4;    // lambda
  double interaction_strength = 0.8;  // kappa
  double noise = 0.3;                 // eta
  double modality_offset = 0.5;
  double text_class_bias = 1.2;
  std::uint64_t seed = 0;

  /// Throws ConfigError when the geometry does not fit in `dim`.
  void validate() const;
  nlohmann::json to_json() const;
  static ToyFixtureOptions from_json(const nlohmann::json& doc);
};

struct ToyFixture {
  ToyFixtureOptions options;
  FeatureMatrix images;      // all domains, labelled
  FeatureMatrix text_cache;  // every phrase the pipeline can ask for
  AttributeBank attributes;
  DescriptionTemplates templates;
  ClassTextBank class_bank;
  Matrix basis;  // rows: classes, domains, modality, residual
  /// Norm(mu_c + rho nu_k), row k * classes + c.
  Matrix cell_centroids;
  /// Class the text of each domain leans towards (-1 for the source).
  std::vector<int> biased_class;
};

std::string toy_class_name(std::size_t c);
std::string toy_domain_name(std::size_t k);

ToyFixture generate_toy_fixture(const ToyFixtureOptions& options);

/// Writes features/, text_cache/, attributes.json, templates.json,
/// fixture.json (options and generating transform) and config.json (an
/// experiment config over those files, outputs under runs/).
void write_toy_fixture(const std::filesystem::path& dir, const ToyFixture& fixture);

}  // namespace ldfs
