#pragma once

// Stage-2 consumers of original + synthetic features.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ldfs/feature_core.hpp"
#include "ldfs/trainer.hpp"

namespace ldfs {

/// argmax_c cos(f, bank row c), lowest index on ties.
std::size_t zero_shot_classify(const UnitVector& f, const ClassTextBank& bank);
std::size_t zero_shot_classify(std::span<const double> f, const ClassTextBank& bank);

struct LinearProbe {
  Matrix weights;  // C x d
  Vector bias;     // C

  std::size_t classes() const noexcept { return weights.rows(); }
  std::size_t dim() const noexcept { return weights.cols(); }
  void validate() const;
};

/// Logits W f + b.
Vector probe_logits(const LinearProbe& probe, std::span<const double> f);

/// argmax of W f + b, lowest index on ties.
std::size_t predict(const LinearProbe& probe, const UnitVector& f);
std::size_t predict(const LinearProbe& probe, std::span<const double> f);

/// Weighted mean cross-entropy sum_i w_i CE_i / sum_i w_i (unit weights when
/// `row_weights` is empty).
double probe_objective(const LinearProbe& probe, const FeatureMatrix& data, std::span<const double> row_weights = {});

/// Minimizes probe_objective with AdamW from a zero start, shuffled
/// minibatches, deterministic per schedule.seed. Every class in
/// [0, num_classes) needs at least one row.
LinearProbe train_linear_probe(const FeatureMatrix& train, std::size_t num_classes, const Schedule& schedule,
                               std::span<const double> row_weights = {});

void save_probe(const std::filesystem::path& dir, const LinearProbe& probe);
LinearProbe load_probe(const std::filesystem::path& dir);

/// A stage-2 finetuning method. Only the linear probe and the zero-shot head
/// ship here; prompt-learning methods plug in through StrategyRegistry.
class FinetuneStrategy {
 public:
  virtual ~FinetuneStrategy() = default;
  virtual std::string name() const = 0;
  virtual void fit(const FeatureMatrix& features, const ClassTextBank& bank, std::span<const double> row_weights) = 0;
  virtual std::size_t predict(std::span<const double> f) const = 0;
  /// Persists fitted state (no-op for stateless strategies).
  virtual void save(const std::filesystem::path& dir) const;
  virtual void load(const std::filesystem::path& dir, const ClassTextBank& bank);
};

struct StrategyOptions {
  Schedule schedule;
};

class LinearProbeStrategy final : public FinetuneStrategy {
 public:
  explicit LinearProbeStrategy(Schedule schedule) : schedule_(schedule) {}
  std::string name() const override { return "linear_probe"; }
  void fit(const FeatureMatrix& features, const ClassTextBank& bank, std::span<const double> row_weights) override;
  std::size_t predict(std::span<const double> f) const override;
  void save(const std::filesystem::path& dir) const override;
  void load(const std::filesystem::path& dir, const ClassTextBank& bank) override;
  const LinearProbe& probe() const noexcept { return probe_; }

 private:
  Schedule schedule_;
  LinearProbe probe_;
};

class ZeroShotStrategy final : public FinetuneStrategy {
 public:
  std::string name() const override { return "zero_shot"; }
  void fit(const FeatureMatrix& features, const ClassTextBank& bank, std::span<const double> row_weights) override;
  std::size_t predict(std::span<const double> f) const override;
  void load(const std::filesystem::path& dir, const ClassTextBank& bank) override;

 private:
  ClassTextBank bank_;
};

class StrategyRegistry {
 public:
  using Factory = std::function<std::unique_ptr<FinetuneStrategy>(const StrategyOptions&)>;

  /// Registry with "linear_probe" and "zero_shot" pre-registered.
  static StrategyRegistry& instance();

  void add(const std::string& name, Factory factory);
  bool contains(const std::string& name) const;
  std::unique_ptr<FinetuneStrategy> create(const std::string& name, const StrategyOptions& options) const;
  std::vector<std::string> names() const;

 private:
  StrategyRegistry();
  std::map<std::string, Factory> factories_;
};

}  // namespace ldfs
