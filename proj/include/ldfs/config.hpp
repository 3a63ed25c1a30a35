#pragma once

// Experiment configuration: a JSON document whose keys are exactly the
// fields below. Unknown keys are rejected. Stage hyperparameters left out
// of the file fall back to the preset of the named dataset, when one
// exists, and to built-in defaults otherwise.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ldfs/losses.hpp"
#include "ldfs/text_engine.hpp"
#include "ldfs/trainer.hpp"

namespace ldfs {

/// Published per-dataset hyperparameters and base text descriptions.
struct DatasetPreset {
  std::string_view name;
  double lr1;
  double wd1;
  double lr2;
  double wd2;
  double alpha;
  double beta;
  double gamma;
  DescriptionTemplates templates;
};

/// Case-insensitive lookup ("pacs", "officehome", "domainnet", "nico++").
const DatasetPreset* find_preset(std::string_view dataset);
const std::vector<DatasetPreset>& dataset_presets();

struct ExperimentPaths {
  std::filesystem::path feature_cache;
  std::filesystem::path text_cache;
  std::filesystem::path attribute_bank;
  std::filesystem::path templates;
  std::filesystem::path output_dir;
};

struct GapSettings {
  std::vector<double> gammas{0.0, 0.01, 0.05, 0.1, 0.2};
  std::size_t seeds = 20;
};

struct ExperimentConfig {
  std::string dataset;
  std::string source_domain;
  std::vector<std::string> target_domains;
  std::size_t shots = 16;
  std::size_t dim = 0;           // 0: taken from the feature cache
  std::size_t hidden_width = 0;  // 0: equal to dim
  Activation activation = Activation::gelu;
  double init_scale = 0.5;
  LossConfig loss;
  Schedule stage1{1e-3, 5e-2, 50, 64, 0};
  Schedule stage2{2e-3, 5e-4, 100, 32, 0};
  std::vector<std::uint64_t> seeds{0};
  std::string strategy = "linear_probe";
  double synthetic_weight = 1.0;
  double validation_fraction = 0.2;
  GapSettings gap;
  ExperimentPaths paths;

  /// Relative paths are resolved against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& file);

  /// Canonical form: every field present, keys sorted.
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& file) const;

  /// 16 hex digits of a hash over the canonical JSON.
  std::string hash() const;

  /// Field invariants; with `check_paths`, input paths must exist.
  void validate(bool check_paths = true) const;
};

}  // namespace ldfs
