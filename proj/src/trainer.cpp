#include "ldfs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ldfs/optimizer.hpp"
#include "ldfs/random.hpp"

namespace ldfs {

void Schedule::validate() const {
  if (!std::isfinite(lr) || lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (!std::isfinite(weight_decay) || weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

std::vector<std::vector<InstanceDescriptionPair>> description_candidates(const FeatureMatrix& features, int target_domain,
                                                                         const SynthesisContext& ctx,
                                                                         const LossConfig& cfg) {
  const auto& class_names = ctx.class_bank.class_names();
  const auto& domain_names = features.domain_names();
  if (target_domain < 0 || static_cast<std::size_t>(target_domain) >= domain_names.size()) {
    throw Error("unknown target domain id " + std::to_string(target_domain));
  }
  const std::string& domain_name = domain_names[static_cast<std::size_t>(target_domain)];

  std::map<std::pair<int, std::string>, InstanceDescriptionPair> encoded;
  auto pair_for = [&](int label, const std::string& attribute) -> const InstanceDescriptionPair& {
    const auto key = std::make_pair(label, attribute);
    auto it = encoded.find(key);
    if (it == encoded.end()) {
      auto pair = compose_instance_descriptions(class_names.at(static_cast<std::size_t>(label)), attribute,
                                                ctx.templates, target_domain, domain_name, ctx.encoder);
      it = encoded.emplace(key, std::move(pair)).first;
    }
    return it->second;
  };

  std::vector<std::vector<InstanceDescriptionPair>> out(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int label = features.label(i);
    if (cfg.direction_mode == DirectionMode::instance && cfg.top_k > 0) {
      for (const auto& ranked : rank_attributes(features.unit_row(i), label, ctx.attributes, cfg.top_k)) {
        out[i].push_back(pair_for(label, ranked.phrase));
      }
    }
    if (out[i].empty()) out[i].push_back(pair_for(label, ""));
  }
  return out;
}

MapperTrainingResult train_mapper(const FeatureMatrix& features, int target_domain, const SynthesisContext& ctx,
                                  const LossConfig& cfg, const Schedule& schedule, const MapperOptions& options) {
  cfg.validate();
  schedule.validate();
  if (features.empty()) throw Error("train_mapper: no training features");
  if (features.raw()) throw Error("train_mapper: features must be normalized");
  for (int tag : features.domain_tags()) {
    if (tag != features.domain(0)) throw Error("train_mapper: features must come from a single source domain");
  }
  if (features.domain(0) == target_domain) throw Error("train_mapper: target domain equals the source domain");
  if (ctx.class_bank.dim() != features.dim()) throw DimensionMismatch("train_mapper: class bank dimension mismatch");

  const std::size_t d = features.dim();
  const std::size_t hidden = options.hidden == 0 ? d : options.hidden;
  MapperTrainingResult result;
  result.params = MapperParams::near_identity(d, hidden, options.activation, target_domain,
                                             derive_seed(schedule.seed, streams::kInit), options.init_scale);
  if (schedule.epochs == 0) return result;

  const auto candidates = description_candidates(features, target_domain, ctx, cfg);

  Rng shuffle_rng = make_rng(schedule.seed, streams::kShuffle);
  Rng attribute_rng = make_rng(schedule.seed, streams::kAttribute);
  Rng noise_rng = make_rng(schedule.seed, streams::kNoise);
  AdamW optimizer(result.params.parameter_count(), schedule.lr, schedule.weight_decay);
  std::vector<double> grad(result.params.parameter_count());
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLosses epoch_losses;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      SynthesisBatch batch;
      batch.source.resize(end - start, d);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t row = order[b];
        const auto src = features.row(row);
        std::copy(src.begin(), src.end(), batch.source.row(b - start).begin());
        batch.labels.push_back(features.label(row));
        const auto& options_for_row = candidates[row];
        const std::size_t pick = options_for_row.size() > 1 ? uniform_index(attribute_rng, options_for_row.size()) : 0;
        batch.pairs.push_back(options_for_row[pick]);
      }
      batch.validate();
      const SynthesisBatch noisy = apply_noise(batch, cfg, noise_rng);

      LossTerms terms;
      try {
        terms = total_loss(noisy, result.params, ctx.class_bank, cfg, grad);
      } catch (const DegenerateEmbedding& e) {
        // Overflowing mapper outputs surface as unnormalizable rows.
        throw Error("train_mapper: non-finite loss at step " + std::to_string(result.steps) + " (" + e.what() + ")");
      }
      if (!std::isfinite(terms.total)) {
        throw Error("train_mapper: non-finite loss at step " + std::to_string(result.steps));
      }
      optimizer.step(result.params.values, grad);
      ++result.steps;
      result.degenerate_directions += terms.degenerate_directions;
      if (!terms.pair_defined) ++result.pairless_batches;

      const double w = static_cast<double>(end - start) / static_cast<double>(order.size());
      epoch_losses.ld += w * terms.ld;
      epoch_losses.cc += w * terms.cc;
      epoch_losses.pair += w * terms.pair;
      epoch_losses.total += w * terms.total;
    }
    result.trace.push_back(epoch_losses);
  }
  return result;
}

namespace {

void check_mappers(std::span<const MapperParams> mappers, const FeatureMatrix& source) {
  for (const auto& m : mappers) {
    if (m.dim != source.dim()) {
      throw DimensionMismatch("mapper for domain " + std::to_string(m.target_domain) + " has dimension " +
                              std::to_string(m.dim) + ", features have " + std::to_string(source.dim()));
    }
  }
}

}  // namespace

FeatureMatrix synthesize_features(std::span<const MapperParams> mappers, const FeatureMatrix& source) {
  check_mappers(mappers, source);
  FeatureMatrix out = source.empty_like();
  if (mappers.empty() || source.empty()) return out;
  const Matrix inputs = source.to_matrix();
  MapperTape tape;
  for (const auto& m : mappers) {
    mapper_forward_batch(m, inputs, tape);
    const Matrix unit = normalize_rows(tape.output);
    const auto& names = source.domain_names();
    const std::string suffix = (m.target_domain >= 0 && static_cast<std::size_t>(m.target_domain) < names.size())
                                   ? names[static_cast<std::size_t>(m.target_domain)]
                                   : std::to_string(m.target_domain);
    for (std::size_t i = 0; i < source.size(); ++i) {
      out.add_row(unit.row(i), source.label(i), m.target_domain, source.instance_id(i) + "@" + suffix);
    }
  }
  return out;
}

double sphere_deviation(std::span<const MapperParams> mappers, const FeatureMatrix& source) {
  check_mappers(mappers, source);
  if (mappers.empty() || source.empty()) return 0.0;
  const Matrix inputs = source.to_matrix();
  MapperTape tape;
  double total = 0.0;
  for (const auto& m : mappers) {
    mapper_forward_batch(m, inputs, tape);
    for (std::size_t i = 0; i < source.size(); ++i) total += std::abs(l2_norm(tape.output.row(i)) - 1.0);
  }
  return total / static_cast<double>(mappers.size() * source.size());
}

}  // namespace ldfs
