// ldfs command-line front end.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "ldfs/cache_io.hpp"
#include "ldfs/config.hpp"
#include "ldfs/pipeline.hpp"
#include "ldfs/report.hpp"
#include "ldfs/toy_fixture.hpp"

namespace fs = std::filesystem;
using namespace ldfs;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

// Command-line overrides of ExperimentConfig keys. Unset options leave the
// file's value alone.
struct Overrides {
  std::optional<std::string> dataset, source_domain, activation, direction_mode, noise_mode, strategy, output_dir;
  std::vector<std::string> target_domains;
  std::optional<std::size_t> shots, dim, hidden_width, top_k, epochs1, batch1, epochs2, batch2, gap_seeds;
  std::optional<double> alpha, beta, gamma, tau, lr1, wd1, lr2, wd2, synthetic_weight, validation_fraction, init_scale;
  std::optional<bool> independent_noise;
  std::vector<std::uint64_t> seeds;
  std::vector<double> gap_gammas;

  void attach(CLI::App& app) {
    app.add_option("--dataset", dataset);
    app.add_option("--source-domain", source_domain);
    app.add_option("--target-domains", target_domains)->delimiter(',');
    app.add_option("--shots", shots);
    app.add_option("--dim", dim);
    app.add_option("--hidden-width", hidden_width);
    app.add_option("--activation", activation);
    app.add_option("--init-scale", init_scale);
    app.add_option("--alpha", alpha);
    app.add_option("--beta", beta);
    app.add_option("--gamma", gamma);
    app.add_option("--tau", tau);
    app.add_option("--direction-mode", direction_mode);
    app.add_option("--noise-mode", noise_mode);
    app.add_option("--independent-noise", independent_noise);
    app.add_option("--top-k", top_k);
    app.add_option("--lr1", lr1);
    app.add_option("--wd1", wd1);
    app.add_option("--epochs1", epochs1);
    app.add_option("--batch1", batch1);
    app.add_option("--lr2", lr2);
    app.add_option("--wd2", wd2);
    app.add_option("--epochs2", epochs2);
    app.add_option("--batch2", batch2);
    app.add_option("--seeds", seeds)->delimiter(',');
    app.add_option("--strategy", strategy);
    app.add_option("--synthetic-weight", synthetic_weight);
    app.add_option("--validation-fraction", validation_fraction);
    app.add_option("--gap-gammas", gap_gammas)->delimiter(',');
    app.add_option("--gap-seeds", gap_seeds);
    app.add_option("--output-dir", output_dir);
  }

  void apply(ExperimentConfig& cfg) const {
    if (dataset) cfg.dataset = *dataset;
    if (source_domain) cfg.source_domain = *source_domain;
    if (!target_domains.empty()) cfg.target_domains = target_domains;
    if (shots) cfg.shots = *shots;
    if (dim) cfg.dim = *dim;
    if (hidden_width) cfg.hidden_width = *hidden_width;
    if (activation) cfg.activation = parse_activation(*activation);
    if (init_scale) cfg.init_scale = *init_scale;
    if (alpha) cfg.loss.alpha = *alpha;
    if (beta) cfg.loss.beta = *beta;
    if (gamma) cfg.loss.gamma = *gamma;
    if (tau) cfg.loss.tau = *tau;
    if (direction_mode) cfg.loss.direction_mode = parse_direction_mode(*direction_mode);
    if (noise_mode) cfg.loss.noise_mode = parse_noise_mode(*noise_mode);
    if (independent_noise) cfg.loss.independent_noise = *independent_noise;
    if (top_k) cfg.loss.top_k = *top_k;
    if (lr1) cfg.stage1.lr = *lr1;
    if (wd1) cfg.stage1.weight_decay = *wd1;
    if (epochs1) cfg.stage1.epochs = *epochs1;
    if (batch1) cfg.stage1.batch_size = *batch1;
    if (lr2) cfg.stage2.lr = *lr2;
    if (wd2) cfg.stage2.weight_decay = *wd2;
    if (epochs2) cfg.stage2.epochs = *epochs2;
    if (batch2) cfg.stage2.batch_size = *batch2;
    if (!seeds.empty()) cfg.seeds = seeds;
    if (strategy) cfg.strategy = *strategy;
    if (synthetic_weight) cfg.synthetic_weight = *synthetic_weight;
    if (validation_fraction) cfg.validation_fraction = *validation_fraction;
    if (!gap_gammas.empty()) cfg.gap.gammas = gap_gammas;
    if (gap_seeds) cfg.gap.seeds = *gap_seeds;
    if (output_dir) cfg.paths.output_dir = fs::absolute(*output_dir).lexically_normal();
  }
};

struct ConfigArgs {
  std::string config_file;
  Overrides overrides;

  void attach(CLI::App& app) {
    app.add_option("-c,--config", config_file, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    overrides.attach(app);
  }

  ExperimentConfig load() const {
    auto cfg = ExperimentConfig::load(config_file);
    overrides.apply(cfg);
    cfg.validate();
    return cfg;
  }
};

void print_report_summary(const EvalReport& r, const fs::path& dir) {
  std::cout << "run: " << dir.string() << '\n';
  if (r.scores) {
    std::cout << "DA " << format_number(r.scores->da) << "  DA(no source) " << format_number(r.scores->da_without_source)
              << "  CC " << format_number(r.scores->cc) << "  DS " << format_number(r.scores->ds) << '\n';
  }
  for (const auto& [domain, acc] : r.accuracy.per_domain) {
    std::cout << domain << " accuracy " << format_number(acc) << " (zero-shot "
              << format_number(r.zero_shot_accuracy.per_domain.at(domain)) << ")\n";
  }
  std::cout << "average accuracy " << format_number(r.accuracy.average) << '\n';
}

// ---------------------------------------------------------------------------
// ingest

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Each <domain>.csv holds rows "instance_id,class_name,v1,...,vd".
FeatureMatrix ingest_directory(const fs::path& input, std::size_t expected_dim) {
  struct RawRow {
    std::string id, cls;
    std::vector<double> values;
  };
  std::map<std::string, std::vector<RawRow>> by_domain;
  std::set<std::string> classes;
  std::size_t dim = expected_dim;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    const std::string domain = entry.path().stem().string();
    std::ifstream in(entry.path());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto fields = split_csv_line(line);
      const auto where = entry.path().string() + ":" + std::to_string(line_no);
      if (fields.size() < 3) throw FormatError(where + ": expected id,class,values...");
      RawRow row{fields[0], fields[1], {}};
      for (std::size_t i = 2; i < fields.size(); ++i) {
        try {
          std::size_t used = 0;
          row.values.push_back(std::stod(fields[i], &used));
          if (used != fields[i].size()) throw std::invalid_argument(fields[i]);
        } catch (const std::exception&) {
          throw FormatError(where + ": not a number: '" + fields[i] + "'");
        }
      }
      if (dim == 0) dim = row.values.size();
      if (row.values.size() != dim) {
        throw DimensionMismatch(where + ": " + std::to_string(row.values.size()) + " values, expected " +
                                std::to_string(dim));
      }
      classes.insert(row.cls);
      by_domain[domain].push_back(std::move(row));
    }
  }
  if (by_domain.empty()) throw FormatError("no .csv embedding files in " + input.string());

  FeatureMatrix out(dim);
  out.set_class_names({classes.begin(), classes.end()});
  std::vector<std::string> domains;
  for (const auto& [d, _] : by_domain) domains.push_back(d);
  out.set_domain_names(domains);
  for (std::size_t k = 0; k < domains.size(); ++k) {
    for (const auto& row : by_domain[domains[k]]) {
      const auto unit = normalize(row.values);
      out.add_row(unit.components(), out.class_index(row.cls), static_cast<int>(k), row.id);
    }
  }
  return out;
}

void describe_cache(const FeatureMatrix& f) {
  std::cout << "rows " << f.size() << ", dim " << f.dim() << ", classes " << f.class_names().size() << ", domains "
            << f.domain_names().size() << '\n';
  for (std::size_t k = 0; k < f.domain_names().size(); ++k) {
    std::cout << "  " << f.domain_names()[k] << ": " << f.rows_in_domain(static_cast<int>(k)).size() << " rows\n";
  }
}

int run(int argc, char** argv) {
  CLI::App app{"ldfs: language-guided feature synthesis toolkit"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "build or validate a feature cache from raw embedding CSV files");
  std::string ingest_input, ingest_output, ingest_validate, ingest_dataset, ingest_templates;
  std::size_t ingest_dim = 0;
  ingest->add_option("--input", ingest_input, "directory of <domain>.csv files")->check(CLI::ExistingDirectory);
  ingest->add_option("--output", ingest_output, "feature cache directory to write");
  ingest->add_option("--dim", ingest_dim, "expected embedding dimension");
  ingest->add_option("--validate", ingest_validate, "check an existing cache instead");
  ingest->add_option("--dataset", ingest_dataset, "dataset preset for --templates-out");
  ingest->add_option("--templates-out", ingest_templates, "write the preset's description templates here");

  // toy
  auto* toy = app.add_subcommand("toy", "generate the synthetic toy fixture");
  ToyFixtureOptions toy_opts;
  std::string toy_output;
  toy->add_option("--output", toy_output)->required();
  toy->add_option("--classes", toy_opts.classes);
  toy->add_option("--domains", toy_opts.domains);
  toy->add_option("--dim", toy_opts.dim);
  toy->add_option("--samples-per-cell", toy_opts.samples_per_cell);
  toy->add_option("--attributes-per-class", toy_opts.attributes_per_class);
  toy->add_option("--domain-shift", toy_opts.domain_shift);
  toy->add_option("--dispersion", toy_opts.dispersion);
  toy->add_option("--modality-offset", toy_opts.modality_offset);
  toy->add_option("--seed", toy_opts.seed);

  ConfigArgs synth_args, finetune_args, eval_args, pipeline_args, ablate_args, gap_args, nn_args;
  auto* synth = app.add_subcommand("synthesize", "train mappers and synthesize target-domain features");
  synth_args.attach(*synth);
  auto* finetune = app.add_subcommand("finetune", "fit the stage-2 strategy on original + synthetic features");
  finetune_args.attach(*finetune);
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a finetuned run and write its report");
  eval_args.attach(*evaluate);
  auto* pipeline = app.add_subcommand("pipeline", "synthesize, finetune and evaluate for every seed");
  pipeline_args.attach(*pipeline);

  auto* ablate = app.add_subcommand("ablate", "run ablation variants");
  ablate_args.attach(*ablate);
  std::vector<std::string> variants;
  ablate->add_option("--variants", variants, "subset of variants (default: all)")->delimiter(',');

  auto* gap = app.add_subcommand("gap", "modality gap versus text noise level");
  gap_args.attach(*gap);
  std::string gap_output;
  gap->add_option("--output", gap_output, "CSV file (default: stdout); an .svg is written beside it");

  auto* nn = app.add_subcommand("inspect-nn", "nearest real neighbour of every synthetic feature");
  nn_args.attach(*nn);
  std::string nn_output;
  std::size_t nn_limit = 0;
  nn->add_option("--output", nn_output, "CSV file (default: stdout)");
  nn->add_option("--limit", nn_limit, "rows to print (0: all)");

  auto* report = app.add_subcommand("report", "re-emit CSV and SVG files from a report.json");
  std::string report_input, report_output;
  report->add_option("--input", report_input, "report.json")->required()->check(CLI::ExistingFile);
  report->add_option("--output", report_output, "directory (default: beside the input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*ingest) {
    if (!ingest_validate.empty()) {
      const auto cache = read_feature_cache(ingest_validate);
      for (std::size_t i = 0; i < cache.size(); ++i) {
        if (!is_unit(cache.row(i))) throw FormatError("row " + std::to_string(i) + " is not unit length");
      }
      describe_cache(cache);
      std::cout << "ok\n";
    }
    if (!ingest_input.empty()) {
      if (ingest_output.empty()) throw ConfigError("ingest --input needs --output");
      const auto cache = ingest_directory(ingest_input, ingest_dim);
      write_feature_cache(ingest_output, cache);
      describe_cache(cache);
    }
    if (!ingest_templates.empty()) {
      const auto* preset = find_preset(ingest_dataset);
      if (!preset) throw ConfigError("no preset for dataset '" + ingest_dataset + "'");
      preset->templates.save(ingest_templates);
    }
    if (ingest_validate.empty() && ingest_input.empty() && ingest_templates.empty()) {
      throw ConfigError("ingest needs --input, --validate or --templates-out");
    }
    return 0;
  }

  if (*toy) {
    const auto fixture = generate_toy_fixture(toy_opts);
    write_toy_fixture(toy_output, fixture);
    std::cout << "wrote " << fixture.images.size() << " image rows and " << fixture.text_cache.size()
              << " text rows to " << toy_output << '\n';
    return 0;
  }

  if (*synth) {
    const auto cfg = synth_args.load();
    for (auto seed : cfg.seeds) {
      run_synthesize(cfg, seed);
      std::cout << "synthesized " << run_directory(cfg, seed).string() << '\n';
    }
    return 0;
  }
  if (*finetune) {
    const auto cfg = finetune_args.load();
    for (auto seed : cfg.seeds) {
      run_finetune(cfg, seed);
      std::cout << "finetuned " << run_directory(cfg, seed).string() << '\n';
    }
    return 0;
  }
  if (*evaluate) {
    const auto cfg = eval_args.load();
    for (auto seed : cfg.seeds) print_report_summary(run_evaluate(cfg, seed), run_directory(cfg, seed));
    return 0;
  }
  if (*pipeline) {
    const auto cfg = pipeline_args.load();
    std::vector<ReportRow> rows;
    for (auto seed : cfg.seeds) {
      auto result = run_pipeline(cfg, seed);
      print_report_summary(result.report, result.run_dir);
      rows.push_back({"seed-" + std::to_string(seed), std::move(result.report)});
    }
    write_summary_csv(experiment_directory(cfg) / "summary.csv", rows);
    return 0;
  }
  if (*ablate) {
    const auto cfg = ablate_args.load();
    std::vector<AblationVariant> chosen;
    if (variants.empty()) {
      chosen = all_ablation_variants();
    } else {
      for (const auto& v : variants) chosen.push_back(parse_ablation_variant(v));
    }
    std::vector<ReportRow> rows;
    for (auto variant : chosen) {
      for (auto seed : cfg.seeds) {
        auto result = run_ablation(cfg, variant, seed);
        std::cout << ablation_variant_name(variant) << " seed " << seed << ": ";
        print_report_summary(result.report, result.run_dir);
        rows.push_back({std::string(ablation_variant_name(variant)) + "/seed-" + std::to_string(seed),
                        std::move(result.report)});
      }
    }
    const fs::path summary = cfg.paths.output_dir / ("ablation-" + cfg.hash() + ".csv");
    fs::create_directories(cfg.paths.output_dir);
    write_summary_csv(summary, rows);
    std::cout << "summary: " << summary.string() << '\n';
    return 0;
  }
  if (*gap) {
    const auto cfg = gap_args.load();
    const auto data = load_experiment_data(cfg);
    const auto seed = cfg.seeds.front();
    const auto split = sample_few_shot(data.features, data.source, cfg.shots, cfg.validation_fraction, seed);
    const auto curve = gap_curve(data, cfg, split, seed);
    std::ostringstream csv;
    csv << "gamma,gap\n";
    for (const auto& p : curve) csv << format_number(p.gamma) << ',' << format_number(p.gap) << '\n';
    if (gap_output.empty()) {
      std::cout << csv.str();
    } else {
      std::ofstream(gap_output, std::ios::trunc) << csv.str();
      std::ofstream(fs::path(gap_output).replace_extension(".svg"), std::ios::trunc) << gap_curve_svg(curve);
    }
    return 0;
  }
  if (*nn) {
    const auto cfg = nn_args.load();
    const auto seed = cfg.seeds.front();
    const auto dir = run_directory(cfg, seed);
    if (!fs::exists(dir / "synthetic")) throw Error("no synthetic features in " + dir.string() + "; run synthesize first");
    const auto features = read_feature_cache(cfg.paths.feature_cache);
    const auto synthetic = read_feature_cache(dir / "synthetic");
    const auto table = nn_table(synthetic, features);
    std::ostringstream csv;
    csv << "instance_id,label,target_domain,nn_instance_id,nn_label,nn_domain,cosine\n";
    const auto& classes = features.class_names();
    const auto& domains = features.domain_names();
    auto name = [](const std::vector<std::string>& names, int i) {
      return i >= 0 && static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)] : std::string("-");
    };
    const std::size_t n = nn_limit == 0 ? table.size() : std::min(nn_limit, table.size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = table[i];
      csv << r.instance_id << ',' << name(classes, r.label) << ',' << name(domains, r.target_domain) << ','
          << r.nn_instance_id << ',' << name(classes, r.nn_label) << ',' << name(domains, r.nn_domain) << ','
          << format_number(r.cosine) << '\n';
    }
    if (nn_output.empty()) {
      std::cout << csv.str();
    } else {
      std::ofstream(nn_output, std::ios::trunc) << csv.str();
    }
    return 0;
  }
  if (*report) {
    const auto r = load_report(report_input);
    const fs::path out = report_output.empty() ? fs::path(report_input).parent_path() : fs::path(report_output);
    write_report_bundle(out, r);
    std::cout << "wrote report bundle to " << out.string() << '\n';
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
}
