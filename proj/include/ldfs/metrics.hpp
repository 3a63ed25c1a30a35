#pragma once

// Synthesis-quality scores, accuracy and modality-gap curves.
//
// Every score is computed from exact brute-force cosine nearest neighbours,
// ties going to the lowest pool row, so results do not depend on thread
// scheduling or index structures.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ldfs/adaptation.hpp"
#include "ldfs/feature_core.hpp"

namespace ldfs {

struct Neighbor {
  std::size_t index;
  double cosine;
};

/// Top-k pool rows by descending cosine to `query`.
std::vector<Neighbor> nearest_neighbor(const UnitVector& query, const FeatureMatrix& pool, std::size_t k);
std::vector<Neighbor> nearest_neighbor(std::span<const double> query, const FeatureMatrix& pool, std::size_t k);

/// 1-NN of every query row.
std::vector<Neighbor> nearest_neighbors(const FeatureMatrix& queries, const FeatureMatrix& pool);

/// Pool rows of every domain except `domain`.
FeatureMatrix without_domain(const FeatureMatrix& pool, int domain);

/// Fraction of synthetic rows whose 1-NN in `pool` (the union of all domain
/// pools) has the target domain: `target` if given, else each row's own
/// domain tag.
double da_score(const FeatureMatrix& synthetic, const FeatureMatrix& pool, std::optional<int> target = std::nullopt);

/// Fraction of synthetic rows whose 1-NN carries the row's class label.
double cc_score(const FeatureMatrix& synthetic, const FeatureMatrix& pool);

enum class DiversityRule {
  first_claim,   // per class, a row repeats if an earlier same-class row claimed its NN
  global_unique  // distinct NN rows over the whole synthetic set / row count
};

/// 1 - repeated / total under `rule`.
double ds_score(const FeatureMatrix& synthetic, const FeatureMatrix& pool,
                DiversityRule rule = DiversityRule::first_claim);

struct AccuracyReport {
  std::map<std::string, double> per_domain;
  double average = 0.0;  // unweighted mean over the evaluated domains
};

/// Top-1 accuracy per named test set.
AccuracyReport evaluate_accuracy(const FinetuneStrategy& strategy,
                                 const std::vector<std::pair<std::string, FeatureMatrix>>& test_sets);

struct GapPoint {
  double gamma;
  double gap;
};

/// For each gamma, the mean over seeds of modality_gap(images, texts with
/// every row perturbed by perturb_text).
std::vector<GapPoint> gap_sweep(const Matrix& images, const Matrix& texts, std::span<const double> gammas,
                                std::span<const std::uint64_t> seeds);

struct NnRecord {
  std::string instance_id;
  int label = kUnlabeled;
  int target_domain = -1;
  std::string nn_instance_id;
  int nn_domain = -1;
  int nn_label = kUnlabeled;
  double cosine = 0.0;
};

std::vector<NnRecord> nn_table(const FeatureMatrix& synthetic, const FeatureMatrix& pool);

struct SynthesisScores {
  double da = 0.0;                 // pool includes the source domain
  double da_without_source = 0.0;  // source-domain rows removed from the pool
  double cc = 0.0;
  double ds = 0.0;
  std::size_t rows = 0;
};

SynthesisScores score_synthesis(const FeatureMatrix& synthetic, const FeatureMatrix& pool, int source_domain);

struct EvalReport {
  std::optional<SynthesisScores> scores;  // absent when nothing was synthesized
  AccuracyReport accuracy;                // target domains
  AccuracyReport zero_shot_accuracy;      // same domains, zero-shot head
  double source_validation_accuracy = 0.0;
  double sphere_deviation = 0.0;
  std::vector<GapPoint> gap_curve;
  std::vector<NnRecord> nn_table;

  /// Checks the [0, 1] range of every score and accuracy.
  void validate() const;
};

}  // namespace ldfs
