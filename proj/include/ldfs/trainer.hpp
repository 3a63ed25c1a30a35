#pragma once

// Mapper training (stage 1) and multi-domain feature synthesis.

#include <cstdint>
#include <span>
#include <vector>

#include "ldfs/feature_core.hpp"
#include "ldfs/losses.hpp"
#include "ldfs/mapper.hpp"
#include "ldfs/text_engine.hpp"

namespace ldfs {

struct Schedule {
  double lr = 1e-3;
  double weight_decay = 5e-2;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct MapperOptions {
  std::size_t hidden = 0;  // 0: same as the feature dimension
  Activation activation = Activation::gelu;
  double init_scale = 0.5;
};

/// Everything the text side of stage 1 needs.
struct SynthesisContext {
  const ClassTextBank& class_bank;
  const AttributeBank& attributes;
  const DescriptionTemplates& templates;
  TextEncoder& encoder;
};

struct EpochLosses {
  double ld = 0.0;
  double cc = 0.0;
  double pair = 0.0;
  double total = 0.0;
};

struct MapperTrainingResult {
  MapperParams params;
  std::vector<EpochLosses> trace;
  std::size_t steps = 0;
  std::size_t degenerate_directions = 0;
  std::size_t pairless_batches = 0;
};

/// Candidate description pairs per training row: the top_k ranked
/// attributes in instance mode, or the single plain template pair in global
/// mode (also used when no attribute is ranked).
std::vector<std::vector<InstanceDescriptionPair>> description_candidates(const FeatureMatrix& features, int target_domain,
                                                                         const SynthesisContext& ctx,
                                                                         const LossConfig& cfg);

/// Trains the mapper for one target domain on single-source-domain features.
/// Each step samples one candidate description per row, perturbs it per
/// cfg.noise_mode and takes an AdamW step on total_loss.
MapperTrainingResult train_mapper(const FeatureMatrix& features, int target_domain, const SynthesisContext& ctx,
                                  const LossConfig& cfg, const Schedule& schedule, const MapperOptions& options = {});

/// Normalized outputs of every mapper over `source`, stacked mapper by
/// mapper and tagged with each mapper's target domain.
FeatureMatrix synthesize_features(std::span<const MapperParams> mappers, const FeatureMatrix& source);

/// Mean | ||raw mapper output|| - 1 | over all mappers and rows.
double sphere_deviation(std::span<const MapperParams> mappers, const FeatureMatrix& source);

}  // namespace ldfs
