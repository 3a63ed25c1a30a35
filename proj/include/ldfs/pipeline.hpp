#pragma once

// synthesize -> finetune -> evaluate orchestration.
//
// Every run owns output_dir/<dataset>-<config hash>/seed-<seed>/. Stages
// persist their outputs there (split.json, mappers/, synthetic/, strategy/,
// report bundle, run_manifest.json) so they can also run one at a time. A
// failing stage leaves a STALE file naming itself and the cause.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ldfs/adaptation.hpp"
#include "ldfs/config.hpp"
#include "ldfs/metrics.hpp"
#include "ldfs/trainer.hpp"

namespace ldfs {

inline constexpr const char* kStaleMarker = "STALE";

/// Caches and text-side resources named by a config.
struct ExperimentData {
  FeatureMatrix features;
  std::unique_ptr<TextEncoder> encoder;
  ClassTextBank class_bank;
  AttributeBank attributes;
  DescriptionTemplates templates;
  int source = -1;
  std::vector<int> targets;

  SynthesisContext context() const { return {class_bank, attributes, templates, *encoder}; }
};

/// Throws ConfigError for unknown domains or a dimension mismatch.
ExperimentData load_experiment_data(const ExperimentConfig& cfg);

struct FewShotSplit {
  std::vector<std::size_t> train;       // source-domain rows, `shots` per class
  std::vector<std::size_t> validation;  // ceil(fraction * shots) further rows per class
};

/// Stratified by class, deterministic per seed. Classes with fewer source
/// rows than requested contribute what they have; a class with none is an
/// error.
FewShotSplit sample_few_shot(const FeatureMatrix& features, int source_domain, std::size_t shots,
                             double validation_fraction, std::uint64_t seed);
void save_split(const std::filesystem::path& file, const FeatureMatrix& features, const FewShotSplit& split,
                std::uint64_t seed);
FewShotSplit load_split(const std::filesystem::path& file, const FeatureMatrix& features);

std::filesystem::path experiment_directory(const ExperimentConfig& cfg);
std::filesystem::path run_directory(const ExperimentConfig& cfg, std::uint64_t seed);

struct SynthesisOutput {
  FewShotSplit split;
  std::vector<std::string> domains;  // target domain name per mapper
  std::vector<MapperTrainingResult> mappers;
  FeatureMatrix synthetic;
};

/// Stage 1 for every target domain; `seed` drives the split and, through
/// per-domain derived seeds, each mapper.
SynthesisOutput synthesize_stage(const ExperimentData& data, const ExperimentConfig& cfg, std::uint64_t seed);

/// Stage 2 on original train rows plus synthetic rows weighted by
/// cfg.synthetic_weight.
std::unique_ptr<FinetuneStrategy> finetune_stage(const ExperimentData& data, const ExperimentConfig& cfg,
                                                 std::uint64_t seed, const FewShotSplit& split,
                                                 const FeatureMatrix& synthetic);

/// Accuracy on every non-source domain of the cache, zero-shot reference,
/// synthesis scores, gap curve, NN table and sphere deviation.
EvalReport evaluate_stage(const ExperimentData& data, const ExperimentConfig& cfg, std::uint64_t seed,
                          const FewShotSplit& split, const FinetuneStrategy& strategy,
                          const std::vector<MapperParams>& mappers, const FeatureMatrix& synthetic);

/// Gap curve of the training images against the plain template embeddings
/// of every class and domain.
std::vector<GapPoint> gap_curve(const ExperimentData& data, const ExperimentConfig& cfg, const FewShotSplit& split,
                                std::uint64_t seed);

// Stage runners over the run directory. Each loads what earlier stages
// persisted and writes its own outputs.
void run_synthesize(const ExperimentConfig& cfg, std::uint64_t seed);
void run_finetune(const ExperimentConfig& cfg, std::uint64_t seed);
EvalReport run_evaluate(const ExperimentConfig& cfg, std::uint64_t seed);

struct PipelineResult {
  EvalReport report;
  SynthesisOutput synthesis;
  std::filesystem::path run_dir;
};

/// All three stages in one process for one seed; writes every artifact.
PipelineResult run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed);

enum class AblationVariant { full, global, ta_plus, ia, no_ta, no_pair, no_pair_no_ta, no_all };

std::string_view ablation_variant_name(AblationVariant v);
AblationVariant parse_ablation_variant(std::string_view s);
const std::vector<AblationVariant>& all_ablation_variants();

/// Loss configuration of `variant` derived from `base`.
LossConfig apply_variant(LossConfig base, AblationVariant variant);

/// run_pipeline with the loss rewritten per variant (a distinct config, so
/// a distinct output directory).
PipelineResult run_ablation(const ExperimentConfig& cfg, AblationVariant variant, std::uint64_t seed);

}  // namespace ldfs
