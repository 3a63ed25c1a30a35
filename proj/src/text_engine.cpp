#include "ldfs/text_engine.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "ldfs/kernels.hpp"

namespace ldfs {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Vector standard_normal(Rng& rng, std::size_t d) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector z(d);
  for (auto& v : z) v = dist(rng);
  return z;
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(rng);
}

std::string phrase_key(std::string_view phrase) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : phrase) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

UnitVector TextEncoder::encode_one(const std::string& text) {
  auto out = encode(std::span<const std::string>(&text, 1));
  return std::move(out.front());
}

// ---------------------------------------------------------------------------
// Attribute bank

namespace {

const char* provenance_name(Provenance p) {
  return p == Provenance::offline_fixture ? "offline-fixture" : "external-service";
}

Provenance parse_provenance(const std::string& s) {
  if (s == "offline-fixture") return Provenance::offline_fixture;
  if (s == "external-service") return Provenance::external_service;
  throw FormatError("unknown attribute bank provenance '" + s + "'");
}

}  // namespace

AttributeBank::AttributeBank(std::vector<std::string> class_names, std::vector<std::vector<Attribute>> per_class,
                             Provenance provenance)
    : class_names_(std::move(class_names)), per_class_(std::move(per_class)), provenance_(provenance) {
  if (class_names_.size() != per_class_.size()) throw FormatError("attribute bank: class count mismatch");
  std::size_t dim = 0;
  for (std::size_t c = 0; c < per_class_.size(); ++c) {
    if (per_class_[c].empty()) throw FormatError("attribute bank: class '" + class_names_[c] + "' has no attributes");
    for (const auto& a : per_class_[c]) {
      if (dim == 0) dim = a.embedding.dim();
      if (a.embedding.dim() != dim) throw DimensionMismatch("attribute bank: mixed embedding dimensions");
    }
  }
}

const std::vector<Attribute>& AttributeBank::attributes(int class_id) const {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= per_class_.size()) {
    throw Error("attribute bank: unknown class id " + std::to_string(class_id));
  }
  return per_class_[static_cast<std::size_t>(class_id)];
}

AttributeBank AttributeBank::load(const std::filesystem::path& file, TextEncoder& encoder,
                                  const std::vector<std::string>& class_names) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open attribute bank " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  const auto provenance = parse_provenance(doc.value("provenance", std::string("offline-fixture")));
  std::vector<std::vector<Attribute>> per_class(class_names.size());
  std::vector<bool> seen(class_names.size(), false);
  for (const auto& entry : doc.at("classes")) {
    const auto name = entry.at("name").get<std::string>();
    const auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) continue;  // banks may cover more classes than one experiment uses
    const auto c = static_cast<std::size_t>(it - class_names.begin());
    std::vector<std::string> phrases;
    std::vector<std::string> keys;
    for (const auto& a : entry.at("attributes")) {
      phrases.push_back(a.at("phrase").get<std::string>());
      keys.push_back(a.value("key", phrase_key(phrases.back())));
      if (keys.back() != phrase_key(phrases.back())) {
        throw FormatError(file.string() + ": key for \"" + phrases.back() + "\" is not its phrase hash");
      }
    }
    auto embeddings = encoder.encode(phrases);
    for (std::size_t i = 0; i < phrases.size(); ++i) {
      per_class[c].push_back({phrases[i], keys[i], std::move(embeddings[i])});
    }
    seen[c] = true;
  }
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    if (!seen[c]) throw FormatError(file.string() + ": no attributes for class '" + class_names[c] + "'");
  }
  return AttributeBank(class_names, std::move(per_class), provenance);
}

void AttributeBank::save(const std::filesystem::path& file) const {
  json classes = json::array();
  for (std::size_t c = 0; c < per_class_.size(); ++c) {
    json attrs = json::array();
    for (const auto& a : per_class_[c]) attrs.push_back({{"phrase", a.phrase}, {"key", a.key}});
    classes.push_back({{"name", class_names_[c]}, {"attributes", attrs}});
  }
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out << json{{"provenance", provenance_name(provenance_)}, {"classes", classes}}.dump(2) << '\n';
}

std::vector<RankedAttribute> rank_attributes(const UnitVector& image, int class_id, const AttributeBank& bank,
                                             std::size_t top_k) {
  const auto& attrs = bank.attributes(class_id);
  std::vector<RankedAttribute> ranked;
  ranked.reserve(attrs.size());
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    ranked.push_back({attrs[i].phrase, i, cosine(image, attrs[i].embedding)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedAttribute& a, const RankedAttribute& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.phrase != b.phrase) return a.phrase < b.phrase;
    return a.index < b.index;
  });
  if (ranked.size() > top_k) ranked.resize(top_k);
  return ranked;
}

// ---------------------------------------------------------------------------
// Templates

std::string expand_template(std::string_view tmpl, std::string_view class_name) {
  static constexpr std::string_view kSlot = "{class}";
  std::string out;
  std::size_t slots = 0;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      if (tmpl.substr(i, kSlot.size()) != kSlot) {
        const auto close = tmpl.find('}', i);
        throw ConfigError("unknown placeholder '" + std::string(tmpl.substr(i, close == std::string_view::npos ? 1 : close - i + 1)) +
                          "' in template \"" + std::string(tmpl) + "\"");
      }
      out += class_name;
      ++slots;
      i += kSlot.size();
    } else if (tmpl[i] == '}') {
      throw ConfigError("unbalanced '}' in template \"" + std::string(tmpl) + "\"");
    } else {
      out += tmpl[i++];
    }
  }
  if (slots != 1) {
    throw ConfigError("template \"" + std::string(tmpl) + "\" must contain exactly one {class} placeholder");
  }
  return out;
}

std::string attach_attribute(std::string_view sentence, std::string_view attribute) {
  if (attribute.empty()) return std::string(sentence);
  std::string_view stem = sentence;
  while (!stem.empty() && (stem.back() == '.' || stem.back() == ' ')) stem.remove_suffix(1);
  std::string out(stem);
  out += ", ";
  out += attribute;
  out += '.';
  return out;
}

void DescriptionTemplates::validate() const {
  expand_template(class_prompt, "x");
  expand_template(source, "x");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    expand_template(targets[i].second, "x");
    for (std::size_t j = 0; j < i; ++j) {
      if (targets[j].first == targets[i].first) throw ConfigError("duplicate target template for domain '" + targets[i].first + "'");
    }
  }
}

const std::string& DescriptionTemplates::target_for(std::string_view domain) const {
  for (const auto& [name, tmpl] : targets) {
    if (name == domain) return tmpl;
  }
  throw ConfigError("no target template for domain '" + std::string(domain) + "'");
}

DescriptionTemplates DescriptionTemplates::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open templates file " + file.string());
  DescriptionTemplates t;
  try {
    const auto doc = json::parse(in);
    for (const auto& [key, _] : doc.items()) {
      if (key != "class_prompt" && key != "source" && key != "targets") throw ConfigError(file.string() + ": unknown key '" + key + "'");
    }
    t.class_prompt = doc.value("class_prompt", t.class_prompt);
    t.source = doc.at("source").get<std::string>();
    for (const auto& [domain, tmpl] : doc.at("targets").items()) t.targets.emplace_back(domain, tmpl.get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  t.validate();
  return t;
}

void DescriptionTemplates::save(const std::filesystem::path& file) const {
  json targets_json = json::object();
  for (const auto& [domain, tmpl] : targets) targets_json[domain] = tmpl;
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out << json{{"class_prompt", class_prompt}, {"source", source}, {"targets", targets_json}}.dump(2) << '\n';
}

DescriptionTexts compose_description_texts(std::string_view class_name, std::string_view attribute,
                                           const DescriptionTemplates& templates, std::string_view target_domain) {
  return {attach_attribute(expand_template(templates.source, class_name), attribute),
          attach_attribute(expand_template(templates.target_for(target_domain), class_name), attribute)};
}

InstanceDescriptionPair compose_instance_descriptions(std::string_view class_name, std::string_view attribute,
                                                      const DescriptionTemplates& templates, int target_domain,
                                                      std::string_view target_domain_name, TextEncoder& encoder) {
  const auto texts = compose_description_texts(class_name, attribute, templates, target_domain_name);
  const std::string both[] = {texts.source, texts.target};
  auto embedded = encoder.encode(both);
  return {std::move(embedded[0]), std::move(embedded[1]), target_domain, std::string(attribute)};
}

// ---------------------------------------------------------------------------
// Perturbation

UnitVector perturb_text(const UnitVector& t, double gamma, std::span<const double> z) {
  if (!(gamma >= 0.0)) throw Error("perturb_text: gamma must be non-negative");
  if (z.size() != t.dim()) throw DimensionMismatch("perturb_text: noise dimension mismatch");
  if (gamma == 0.0) return t;
  Vector v(t.components().begin(), t.components().end());
  kernels::axpy(gamma, z.data(), v.data(), v.size());
  return normalize(v);
}

UnitVector perturb_text(const UnitVector& t, double gamma, Rng& rng) {
  if (!(gamma >= 0.0)) throw Error("perturb_text: gamma must be non-negative");
  const Vector z = standard_normal(rng, t.dim());
  return perturb_text(t, gamma, z);
}

UnitVector perturb_text(const UnitVector& t, double gamma, std::uint64_t seed) {
  Rng rng(seed);
  return perturb_text(t, gamma, rng);
}

InstanceDescriptionPair perturb_pair(const InstanceDescriptionPair& pair, double gamma, Rng& rng, bool independent) {
  if (!(gamma >= 0.0)) throw Error("perturb_text: gamma must be non-negative");
  const Vector z_source = standard_normal(rng, pair.source.dim());
  const Vector z_target = independent ? standard_normal(rng, pair.target.dim()) : z_source;
  return {perturb_text(pair.source, gamma, z_source), perturb_text(pair.target, gamma, z_target), pair.target_domain,
          pair.attribute};
}

}  // namespace ldfs
