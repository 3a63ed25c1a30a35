#include "ldfs/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include "ldfs/cache_io.hpp"
#include "ldfs/kernels.hpp"
#include "ldfs/random.hpp"
#include "ldfs/report.hpp"

namespace ldfs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& file, const json& doc) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

// Runs `fn` as stage `name`; on failure leaves a STALE marker in `run_dir`.
// Config errors keep their type so callers can tell them apart.
template <typename F>
auto stage(const fs::path& run_dir, const std::string& name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    std::ofstream(run_dir / kStaleMarker, std::ios::trunc) << "stage: " << name << "\ncause: " << e.what() << '\n';
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    if (dynamic_cast<const StageError*>(&e)) throw;
    throw StageError(name, e.what());
  }
}

void clear_stale(const fs::path& run_dir) {
  std::error_code ec;
  fs::remove(run_dir / kStaleMarker, ec);
}

std::uint64_t mapper_seed(std::uint64_t seed, int domain) { return derive_seed(seed, 100 + static_cast<std::uint64_t>(domain)); }

std::vector<double> finetune_weights(std::size_t originals, std::size_t synthetic, double synthetic_weight) {
  std::vector<double> w(originals, 1.0);
  w.insert(w.end(), synthetic, synthetic_weight);
  return w;
}

json trace_json(const std::vector<EpochLosses>& trace) {
  json t = json::array();
  for (const auto& e : trace) t.push_back({{"ld", e.ld}, {"cc", e.cc}, {"pair", e.pair}, {"total", e.total}});
  return t;
}

json run_manifest(const ExperimentConfig& cfg, std::uint64_t seed, const SynthesisOutput& s) {
  json mappers = json::array();
  for (std::size_t i = 0; i < s.mappers.size(); ++i) {
    const auto& m = s.mappers[i];
    mappers.push_back({{"target_domain", s.domains[i]},
                       {"parameters", m.params.parameter_count()},
                       {"steps", m.steps},
                       {"degenerate_directions", m.degenerate_directions},
                       {"pairless_batches", m.pairless_batches},
                       {"trace", trace_json(m.trace)}});
  }
  return {{"config", cfg.to_json()},
          {"config_hash", cfg.hash()},
          {"seed", seed},
          {"kernels", kernels::isa_name(kernels::active().isa)},
          {"train_rows", s.split.train.size()},
          {"validation_rows", s.split.validation.size()},
          {"synthetic_rows", s.synthetic.size()},
          {"mappers", mappers}};
}

void persist_synthesis(const fs::path& run_dir, const ExperimentConfig& cfg, std::uint64_t seed,
                       const ExperimentData& data, const SynthesisOutput& s) {
  fs::create_directories(run_dir);
  save_split(run_dir / "split.json", data.features, s.split, seed);
  fs::remove_all(run_dir / "mappers");
  for (std::size_t i = 0; i < s.mappers.size(); ++i) {
    save_mapper(run_dir / "mappers" / s.domains[i], s.mappers[i].params,
                {{"steps", s.mappers[i].steps}, {"trace", trace_json(s.mappers[i].trace)}});
  }
  write_feature_cache(run_dir / "synthetic", s.synthetic);
  write_json(run_dir / "run_manifest.json", run_manifest(cfg, seed, s));
}

std::vector<MapperParams> load_mappers(const fs::path& run_dir, const ExperimentConfig& cfg) {
  std::vector<MapperParams> out;
  for (const auto& domain : cfg.target_domains) out.push_back(load_mapper(run_dir / "mappers" / domain));
  return out;
}

StrategyOptions strategy_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  Schedule s = cfg.stage2;
  s.seed = seed;
  return {s};
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  data.features = read_feature_cache(cfg.paths.feature_cache);
  if (cfg.dim != 0 && cfg.dim != data.features.dim()) {
    throw ConfigError("config dim " + std::to_string(cfg.dim) + " does not match feature cache dimension " +
                      std::to_string(data.features.dim()));
  }
  if (data.features.class_names().empty()) throw FormatError("feature cache has no class names");
  data.source = data.features.domain_index(cfg.source_domain);
  if (data.source < 0) throw ConfigError("source domain '" + cfg.source_domain + "' is not in the feature cache");
  for (const auto& t : cfg.target_domains) {
    const int id = data.features.domain_index(t);
    if (id < 0) throw ConfigError("target domain '" + t + "' is not in the feature cache");
    data.targets.push_back(id);
  }

  auto text_cache = read_feature_cache(cfg.paths.text_cache);
  if (text_cache.dim() != data.features.dim()) {
    throw DimensionMismatch("text cache dimension " + std::to_string(text_cache.dim()) +
                            " differs from feature dimension " + std::to_string(data.features.dim()));
  }
  data.encoder = make_text_encoder(std::move(text_cache));
  data.templates = DescriptionTemplates::load(cfg.paths.templates);
  for (const auto& t : cfg.target_domains) {
    try {
      data.templates.target_for(t);
    } catch (const Error&) {
      throw ConfigError("templates have no entry for target domain '" + t + "'");
    }
  }

  const auto& names = data.features.class_names();
  std::vector<std::string> prompts;
  for (const auto& n : names) prompts.push_back(expand_template(data.templates.class_prompt, n));
  const auto encoded = data.encoder->encode(prompts);
  Matrix bank(names.size(), data.features.dim());
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::copy(encoded[c].components().begin(), encoded[c].components().end(), bank.row(c).begin());
  }
  data.class_bank = ClassTextBank(names, std::move(bank));
  data.attributes = AttributeBank::load(cfg.paths.attribute_bank, *data.encoder, names);
  return data;
}

FewShotSplit sample_few_shot(const FeatureMatrix& features, int source_domain, std::size_t shots,
                             double validation_fraction, std::uint64_t seed) {
  if (shots < 1) throw ConfigError("shots must be at least 1");
  const std::size_t classes = features.class_names().size();
  std::vector<std::vector<std::size_t>> per_class(classes);
  for (std::size_t i : features.rows_in_domain(source_domain)) {
    const int label = features.label(i);
    if (label >= 0 && static_cast<std::size_t>(label) < classes) per_class[static_cast<std::size_t>(label)].push_back(i);
  }
  const auto n_val = static_cast<std::size_t>(std::ceil(validation_fraction * static_cast<double>(shots)));
  Rng rng = make_rng(seed, streams::kSplit);
  FewShotSplit split;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& rows = per_class[c];
    if (rows.empty()) {
      throw Error("class '" + features.class_names()[c] + "' has no rows in the source domain");
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    const std::size_t n_train = std::min(shots, rows.size());
    split.train.insert(split.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    const std::size_t n_v = std::min(n_val, rows.size() - n_train);
    split.validation.insert(split.validation.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train),
                            rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_v));
  }
  return split;
}

void save_split(const fs::path& file, const FeatureMatrix& features, const FewShotSplit& split, std::uint64_t seed) {
  json train = json::array(), validation = json::array();
  for (std::size_t i : split.train) train.push_back(features.instance_id(i));
  for (std::size_t i : split.validation) validation.push_back(features.instance_id(i));
  write_json(file, {{"seed", seed}, {"train", train}, {"validation", validation}});
}

FewShotSplit load_split(const fs::path& file, const FeatureMatrix& features) {
  const json doc = read_json(file);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < features.size(); ++i) index.emplace(features.instance_id(i), i);
  auto resolve = [&](const json& ids) {
    std::vector<std::size_t> out;
    for (const auto& id : ids) {
      const auto it = index.find(id.get<std::string>());
      if (it == index.end()) throw FormatError("split references unknown instance '" + id.get<std::string>() + "'");
      out.push_back(it->second);
    }
    return out;
  };
  return {resolve(doc.at("train")), resolve(doc.at("validation"))};
}

fs::path experiment_directory(const ExperimentConfig& cfg) {
  const std::string name = (cfg.dataset.empty() ? std::string("experiment") : cfg.dataset) + "-" + cfg.hash();
  return cfg.paths.output_dir / name;
}

fs::path run_directory(const ExperimentConfig& cfg, std::uint64_t seed) {
  return experiment_directory(cfg) / ("seed-" + std::to_string(seed));
}

SynthesisOutput synthesize_stage(const ExperimentData& data, const ExperimentConfig& cfg, std::uint64_t seed) {
  SynthesisOutput out;
  out.split = sample_few_shot(data.features, data.source, cfg.shots, cfg.validation_fraction, seed);
  const FeatureMatrix train = data.features.select(out.split.train);
  const MapperOptions options{cfg.hidden_width, cfg.activation, cfg.init_scale};
  std::vector<MapperParams> params;
  for (std::size_t i = 0; i < data.targets.size(); ++i) {
    Schedule schedule = cfg.stage1;
    schedule.seed = mapper_seed(seed, data.targets[i]);
    out.mappers.push_back(train_mapper(train, data.targets[i], data.context(), cfg.loss, schedule, options));
    out.domains.push_back(cfg.target_domains[i]);
    params.push_back(out.mappers.back().params);
  }
  out.synthetic = synthesize_features(params, train);
  return out;
}

std::unique_ptr<FinetuneStrategy> finetune_stage(const ExperimentData& data, const ExperimentConfig& cfg,
                                                 std::uint64_t seed, const FewShotSplit& split,
                                                 const FeatureMatrix& synthetic) {
  FeatureMatrix combined = data.features.select(split.train);
  const std::size_t originals = combined.size();
  if (!synthetic.empty()) combined.append(synthetic);
  const auto weights = finetune_weights(originals, synthetic.size(), cfg.synthetic_weight);
  auto strategy = StrategyRegistry::instance().create(cfg.strategy, strategy_options(cfg, seed));
  strategy->fit(combined, data.class_bank, weights);
  return strategy;
}

std::vector<GapPoint> gap_curve(const ExperimentData& data, const ExperimentConfig& cfg, const FewShotSplit& split,
                                std::uint64_t seed) {
  const Matrix images = data.features.select(split.train).to_matrix();
  // Every description sentence the mappers can train on, with and without attributes.
  std::vector<std::string> sentences;
  const auto& classes = data.features.class_names();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::string> attributes{""};
    if (cfg.loss.top_k > 0) {
      for (const auto& a : data.attributes.attributes(static_cast<int>(c))) attributes.push_back(a.phrase);
    }
    for (const auto& a : attributes) {
      sentences.push_back(attach_attribute(expand_template(data.templates.source, classes[c]), a));
      for (const auto& t : cfg.target_domains) {
        sentences.push_back(attach_attribute(expand_template(data.templates.target_for(t), classes[c]), a));
      }
    }
  }
  const auto encoded = data.encoder->encode(sentences);
  Matrix texts(encoded.size(), data.features.dim());
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    std::copy(encoded[i].components().begin(), encoded[i].components().end(), texts.row(i).begin());
  }
  std::vector<std::uint64_t> seeds(cfg.gap.seeds);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_seed(seed, 10000 + i);
  return gap_sweep(images, texts, cfg.gap.gammas, seeds);
}

EvalReport evaluate_stage(const ExperimentData& data, const ExperimentConfig& cfg, std::uint64_t seed,
                          const FewShotSplit& split, const FinetuneStrategy& strategy,
                          const std::vector<MapperParams>& mappers, const FeatureMatrix& synthetic) {
  EvalReport report;
  std::vector<std::pair<std::string, FeatureMatrix>> test_sets;
  const auto& domains = data.features.domain_names();
  for (std::size_t k = 0; k < domains.size(); ++k) {
    if (static_cast<int>(k) == data.source) continue;
    auto subset = data.features.domain_subset(static_cast<int>(k));
    if (!subset.empty()) test_sets.emplace_back(domains[k], std::move(subset));
  }
  report.accuracy = evaluate_accuracy(strategy, test_sets);
  ZeroShotStrategy zero_shot;
  zero_shot.fit(data.features.empty_like(), data.class_bank, {});
  report.zero_shot_accuracy = evaluate_accuracy(zero_shot, test_sets);

  if (!split.validation.empty()) {
    std::size_t correct = 0;
    for (std::size_t i : split.validation) {
      if (static_cast<int>(strategy.predict(data.features.row(i))) == data.features.label(i)) ++correct;
    }
    report.source_validation_accuracy = static_cast<double>(correct) / static_cast<double>(split.validation.size());
  }

  const FeatureMatrix train = data.features.select(split.train);
  if (!synthetic.empty()) {
    report.scores = score_synthesis(synthetic, data.features, data.source);
    report.nn_table = nn_table(synthetic, data.features);
  }
  if (!mappers.empty()) report.sphere_deviation = sphere_deviation(mappers, train);
  report.gap_curve = gap_curve(data, cfg, split, seed);
  report.validate();
  return report;
}

void run_synthesize(const ExperimentConfig& cfg, std::uint64_t seed) {
  const fs::path dir = run_directory(cfg, seed);
  auto data = stage(dir, "load", [&] { return load_experiment_data(cfg); });
  auto out = stage(dir, "synthesize", [&] { return synthesize_stage(data, cfg, seed); });
  stage(dir, "synthesize", [&] { persist_synthesis(dir, cfg, seed, data, out); });
  clear_stale(dir);
}

void run_finetune(const ExperimentConfig& cfg, std::uint64_t seed) {
  const fs::path dir = run_directory(cfg, seed);
  auto data = stage(dir, "load", [&] { return load_experiment_data(cfg); });
  stage(dir, "finetune", [&] {
    if (!fs::exists(dir / "split.json")) throw Error("no synthesis outputs in " + dir.string() + "; run synthesize first");
    const auto split = load_split(dir / "split.json", data.features);
    const auto synthetic = read_feature_cache(dir / "synthetic");
    auto strategy = finetune_stage(data, cfg, seed, split, synthetic);
    fs::remove_all(dir / "strategy");
    fs::create_directories(dir / "strategy");
    strategy->save(dir / "strategy");
  });
  clear_stale(dir);
}

EvalReport run_evaluate(const ExperimentConfig& cfg, std::uint64_t seed) {
  const fs::path dir = run_directory(cfg, seed);
  auto data = stage(dir, "load", [&] { return load_experiment_data(cfg); });
  auto report = stage(dir, "evaluate", [&] {
    if (!fs::exists(dir / "strategy")) throw Error("no finetuned strategy in " + dir.string() + "; run finetune first");
    const auto split = load_split(dir / "split.json", data.features);
    const auto synthetic = read_feature_cache(dir / "synthetic");
    const auto mappers = load_mappers(dir, cfg);
    auto strategy = StrategyRegistry::instance().create(cfg.strategy, strategy_options(cfg, seed));
    strategy->load(dir / "strategy", data.class_bank);
    auto r = evaluate_stage(data, cfg, seed, split, *strategy, mappers, synthetic);
    write_report_bundle(dir, r);
    return r;
  });
  clear_stale(dir);
  return report;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed) {
  PipelineResult result;
  result.run_dir = run_directory(cfg, seed);
  const fs::path& dir = result.run_dir;
  auto data = stage(dir, "load", [&] { return load_experiment_data(cfg); });
  result.synthesis = stage(dir, "synthesize", [&] { return synthesize_stage(data, cfg, seed); });
  stage(dir, "synthesize", [&] { persist_synthesis(dir, cfg, seed, data, result.synthesis); });
  auto strategy = stage(dir, "finetune", [&] {
    auto s = finetune_stage(data, cfg, seed, result.synthesis.split, result.synthesis.synthetic);
    fs::remove_all(dir / "strategy");
    fs::create_directories(dir / "strategy");
    s->save(dir / "strategy");
    return s;
  });
  result.report = stage(dir, "evaluate", [&] {
    std::vector<MapperParams> params;
    for (const auto& m : result.synthesis.mappers) params.push_back(m.params);
    auto r = evaluate_stage(data, cfg, seed, result.synthesis.split, *strategy, params, result.synthesis.synthetic);
    write_report_bundle(dir, r);
    return r;
  });
  clear_stale(dir);
  return result;
}

std::string_view ablation_variant_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::full: return "full";
    case AblationVariant::global: return "global";
    case AblationVariant::ta_plus: return "ta_plus";
    case AblationVariant::ia: return "ia";
    case AblationVariant::no_ta: return "no_ta";
    case AblationVariant::no_pair: return "no_pair";
    case AblationVariant::no_pair_no_ta: return "no_pair_no_ta";
    case AblationVariant::no_all: return "no_all";
  }
  return "?";
}

const std::vector<AblationVariant>& all_ablation_variants() {
  static const std::vector<AblationVariant> all = {AblationVariant::full,    AblationVariant::global,
                                                   AblationVariant::ta_plus, AblationVariant::ia,
                                                   AblationVariant::no_ta,   AblationVariant::no_pair,
                                                   AblationVariant::no_pair_no_ta, AblationVariant::no_all};
  return all;
}

AblationVariant parse_ablation_variant(std::string_view s) {
  for (auto v : all_ablation_variants()) {
    if (ablation_variant_name(v) == s) return v;
  }
  throw ConfigError("unknown ablation variant '" + std::string(s) + "'");
}

LossConfig apply_variant(LossConfig base, AblationVariant variant) {
  switch (variant) {
    case AblationVariant::full: break;
    case AblationVariant::global: base.direction_mode = DirectionMode::global; break;
    case AblationVariant::ta_plus: base.noise_mode = NoiseMode::text_widening; break;
    case AblationVariant::ia: base.noise_mode = NoiseMode::image; break;
    case AblationVariant::no_ta: base.noise_mode = NoiseMode::none; break;
    case AblationVariant::no_pair: base.beta = 0.0; break;
    case AblationVariant::no_pair_no_ta:
      base.beta = 0.0;
      base.noise_mode = NoiseMode::none;
      break;
    case AblationVariant::no_all:
      base.beta = 0.0;
      base.alpha = 0.0;
      base.noise_mode = NoiseMode::none;
      break;
  }
  return base;
}

PipelineResult run_ablation(const ExperimentConfig& cfg, AblationVariant variant, std::uint64_t seed) {
  ExperimentConfig v = cfg;
  v.loss = apply_variant(cfg.loss, variant);
  return run_pipeline(v, seed);
}

}  // namespace ldfs
