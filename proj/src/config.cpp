#include "ldfs/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

namespace ldfs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

DescriptionTemplates make_templates(std::string source, std::vector<std::pair<std::string, std::string>> targets) {
  DescriptionTemplates t;
  t.class_prompt = "a photo of a {class}.";
  t.source = std::move(source);
  t.targets = std::move(targets);
  return t;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

const std::vector<DatasetPreset>& dataset_presets() {
  static const std::vector<DatasetPreset> presets = {
      {"PACS", 1e-3, 5e-2, 2e-3, 5e-4, 0.5, 0.5, 0.1,
       make_templates("a real photo of a {class}.", {{"art", "a art photo of a {class}."},
                                                     {"sketch", "a sketch photo of a {class}."},
                                                     {"cartoon", "a cartoon photo of a {class}."},
                                                     {"painting", "a painting photo of a {class}."}})},
      {"OfficeHome", 1e-2, 5e-2, 2e-3, 1e-4, 0.5, 1.0, 0.01,
       make_templates("a real photo of a {class}.", {{"clipart", "a clipart photo of a {class}."},
                                                     {"product", "a stock photo of a {class}."},
                                                     {"sketch", "a sketch photo of a {class}."},
                                                     {"art", "a art photo of a {class}."}})},
      {"DomainNet", 1e-2, 5e-2, 2e-3, 1e-4, 0.5, 1.0, 0.01,
       make_templates("a realistic photo of a {class}.", {{"sketch", "a sketch photo of a {class}."},
                                                          {"painting", "a painting photo of a {class}."},
                                                          {"clipart", "a clipart photo of a {class}."},
                                                          {"infograph", "a infograph photo of a {class}."},
                                                          {"quickdraw", "a quickdraw photo of a {class}."}})},
      {"NICO++", 1e-2, 5e-2, 2e-3, 1e-4, 0.5, 0.75, 0.08,
       make_templates("a photo of a {class} with outdoor background.",
                      {{"autumn", "a photo of a {class} with autumn background."},
                       {"dim", "a photo of a {class} with dim background."},
                       {"grass", "a photo of a {class} with grass background."},
                       {"rock", "a photo of a {class} with rock background."},
                       {"water", "a photo of a {class} with water background."}})},
  };
  return presets;
}

const DatasetPreset* find_preset(std::string_view dataset) {
  const auto wanted = lowercase(dataset);
  for (const auto& p : dataset_presets()) {
    if (lowercase(p.name) == wanted) return &p;
  }
  return nullptr;
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void read_schedule(const json& obj, Schedule& s, const std::string& where) {
  reject_unknown(obj, {"lr", "weight_decay", "epochs", "batch_size"}, where);
  read(obj, "lr", s.lr, where);
  read(obj, "weight_decay", s.weight_decay, where);
  read(obj, "epochs", s.epochs, where);
  read(obj, "batch_size", s.batch_size, where);
}

json schedule_json(const Schedule& s) {
  return {{"lr", s.lr}, {"weight_decay", s.weight_decay}, {"epochs", s.epochs}, {"batch_size", s.batch_size}};
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base_dir) {
  reject_unknown(doc,
                 {"dataset", "source_domain", "target_domains", "shots", "dim", "hidden_width", "activation", "init_scale",
                  "loss", "stage1", "stage2", "seeds", "strategy", "synthetic_weight", "validation_fraction", "gap",
                  "paths"},
                 "config");
  ExperimentConfig cfg;
  read(doc, "dataset", cfg.dataset, "config");
  if (const auto* preset = find_preset(cfg.dataset)) {
    cfg.stage1.lr = preset->lr1;
    cfg.stage1.weight_decay = preset->wd1;
    cfg.stage2.lr = preset->lr2;
    cfg.stage2.weight_decay = preset->wd2;
    cfg.loss.alpha = preset->alpha;
    cfg.loss.beta = preset->beta;
    cfg.loss.gamma = preset->gamma;
  }
  read(doc, "source_domain", cfg.source_domain, "config");
  read(doc, "target_domains", cfg.target_domains, "config");
  read(doc, "shots", cfg.shots, "config");
  read(doc, "dim", cfg.dim, "config");
  read(doc, "hidden_width", cfg.hidden_width, "config");
  if (doc.contains("activation")) cfg.activation = parse_activation(doc.at("activation").get<std::string>());
  read(doc, "init_scale", cfg.init_scale, "config");
  read(doc, "seeds", cfg.seeds, "config");
  read(doc, "strategy", cfg.strategy, "config");
  read(doc, "synthetic_weight", cfg.synthetic_weight, "config");
  read(doc, "validation_fraction", cfg.validation_fraction, "config");

  if (doc.contains("loss")) {
    const auto& l = doc.at("loss");
    reject_unknown(l, {"alpha", "beta", "gamma", "tau", "direction_mode", "noise_mode", "independent_noise", "top_k"},
                   "loss");
    read(l, "alpha", cfg.loss.alpha, "loss");
    read(l, "beta", cfg.loss.beta, "loss");
    read(l, "gamma", cfg.loss.gamma, "loss");
    read(l, "tau", cfg.loss.tau, "loss");
    if (l.contains("direction_mode")) cfg.loss.direction_mode = parse_direction_mode(l.at("direction_mode").get<std::string>());
    if (l.contains("noise_mode")) cfg.loss.noise_mode = parse_noise_mode(l.at("noise_mode").get<std::string>());
    read(l, "independent_noise", cfg.loss.independent_noise, "loss");
    read(l, "top_k", cfg.loss.top_k, "loss");
  }
  if (doc.contains("stage1")) read_schedule(doc.at("stage1"), cfg.stage1, "stage1");
  if (doc.contains("stage2")) read_schedule(doc.at("stage2"), cfg.stage2, "stage2");
  if (doc.contains("gap")) {
    const auto& g = doc.at("gap");
    reject_unknown(g, {"gammas", "seeds"}, "gap");
    read(g, "gammas", cfg.gap.gammas, "gap");
    read(g, "seeds", cfg.gap.seeds, "gap");
  }
  if (doc.contains("paths")) {
    const auto& p = doc.at("paths");
    reject_unknown(p, {"feature_cache", "text_cache", "attribute_bank", "templates", "output_dir"}, "paths");
    auto path_of = [&](const char* key) {
      std::string s;
      read(p, key, s, "paths");
      return resolve(base_dir, s);
    };
    cfg.paths.feature_cache = path_of("feature_cache");
    cfg.paths.text_cache = path_of("text_cache");
    cfg.paths.attribute_bank = path_of("attribute_bank");
    cfg.paths.templates = path_of("templates");
    cfg.paths.output_dir = path_of("output_dir");
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return from_json(doc, fs::absolute(file).parent_path());
}

json ExperimentConfig::to_json() const {
  return {
      {"dataset", dataset},
      {"source_domain", source_domain},
      {"target_domains", target_domains},
      {"shots", shots},
      {"dim", dim},
      {"hidden_width", hidden_width},
      {"activation", activation_name(activation)},
      {"init_scale", init_scale},
      {"loss",
       {{"alpha", loss.alpha},
        {"beta", loss.beta},
        {"gamma", loss.gamma},
        {"tau", loss.tau},
        {"direction_mode", direction_mode_name(loss.direction_mode)},
        {"noise_mode", noise_mode_name(loss.noise_mode)},
        {"independent_noise", loss.independent_noise},
        {"top_k", loss.top_k}}},
      {"stage1", schedule_json(stage1)},
      {"stage2", schedule_json(stage2)},
      {"seeds", seeds},
      {"strategy", strategy},
      {"synthetic_weight", synthetic_weight},
      {"validation_fraction", validation_fraction},
      {"gap", {{"gammas", gap.gammas}, {"seeds", gap.seeds}}},
      {"paths",
       {{"feature_cache", paths.feature_cache.string()},
        {"text_cache", paths.text_cache.string()},
        {"attribute_bank", paths.attribute_bank.string()},
        {"templates", paths.templates.string()},
        {"output_dir", paths.output_dir.string()}}},
  };
}

void ExperimentConfig::save(const fs::path& file) const {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << to_json().dump(2) << '\n';
}

std::string ExperimentConfig::hash() const { return phrase_key(to_json().dump()); }

void ExperimentConfig::validate(bool check_paths) const {
  if (source_domain.empty()) throw ConfigError("source_domain is required");
  std::set<std::string> seen;
  for (const auto& t : target_domains) {
    if (t == source_domain) throw ConfigError("source domain '" + t + "' is also listed as a target domain");
    if (!seen.insert(t).second) throw ConfigError("target domain '" + t + "' listed twice");
  }
  if (shots < 1) throw ConfigError("shots must be at least 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(init_scale > 0.0)) throw ConfigError("init_scale must be positive");
  if (!(synthetic_weight >= 0.0)) throw ConfigError("synthetic_weight must be non-negative");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) throw ConfigError("validation_fraction must be in [0, 1)");
  if (gap.gammas.empty() || gap.seeds == 0) throw ConfigError("gap sweep needs gammas and at least one seed");
  for (double g : gap.gammas) {
    if (!(g >= 0.0)) throw ConfigError("gap gammas must be non-negative");
  }
  loss.validate();
  stage1.validate();
  stage2.validate();
  if (!check_paths) return;
  const std::pair<const char*, const fs::path*> required[] = {{"feature_cache", &paths.feature_cache},
                                                              {"text_cache", &paths.text_cache},
                                                              {"attribute_bank", &paths.attribute_bank},
                                                              {"templates", &paths.templates}};
  for (const auto& [name, path] : required) {
    if (path->empty()) throw ConfigError(std::string("paths.") + name + " is required");
    if (!fs::exists(*path)) throw ConfigError(std::string("paths.") + name + " does not exist: " + path->string());
  }
  if (paths.output_dir.empty()) throw ConfigError("paths.output_dir is required");
}

}  // namespace ldfs
