#include "ldfs/toy_fixture.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "ldfs/cache_io.hpp"
#include "ldfs/config.hpp"
#include "ldfs/random.hpp"

namespace ldfs {

namespace fs = std::filesystem;
using nlohmann::json;

void ToyFixtureOptions::validate() const {
  if (classes < 2) throw ConfigError("toy fixture needs at least 2 classes");
  if (domains < 2) throw ConfigError("toy fixture needs at least 2 domains");
  if (samples_per_cell < 1) throw ConfigError("toy fixture needs at least 1 sample per cell");
  if (attributes_per_class < 1) throw ConfigError("toy fixture needs at least 1 attribute per class");
  if (classes + domains + 3 > dim) {
    throw ConfigError("toy fixture: " + std::to_string(classes) + " classes + " + std::to_string(domains) +
                      " domains + 1 modality direction leave fewer than 2 residual dimensions in dimension " + std::to_string(dim));
  }
  for (double v : {domain_shift, dispersion, attribute_strength, interaction_strength, noise, modality_offset,
                   text_class_bias}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("toy fixture scales must be finite and non-negative");
  }
}

json ToyFixtureOptions::to_json() const {
  return {{"classes", classes},
          {"domains", domains},
          {"dim", dim},
          {"samples_per_cell", samples_per_cell},
          {"attributes_per_class", attributes_per_class},
          {"domain_shift", domain_shift},
          {"dispersion", dispersion},
          {"attribute_strength", attribute_strength},
          {"interaction_strength", interaction_strength},
          {"noise", noise},
          {"modality_offset", modality_offset},
          {"text_class_bias", text_class_bias},
          {"seed", seed}};
}

ToyFixtureOptions ToyFixtureOptions::from_json(const json& doc) {
  ToyFixtureOptions o;
  const ToyFixtureOptions defaults;
  for (const auto& [key, _] : doc.items()) {
    if (!defaults.to_json().contains(key)) throw ConfigError("unknown toy fixture key '" + key + "'");
  }
  o.classes = doc.value("classes", o.classes);
  o.domains = doc.value("domains", o.domains);
  o.dim = doc.value("dim", o.dim);
  o.samples_per_cell = doc.value("samples_per_cell", o.samples_per_cell);
  o.attributes_per_class = doc.value("attributes_per_class", o.attributes_per_class);
  o.domain_shift = doc.value("domain_shift", o.domain_shift);
  o.dispersion = doc.value("dispersion", o.dispersion);
  o.attribute_strength = doc.value("attribute_strength", o.attribute_strength);
  o.interaction_strength = doc.value("interaction_strength", o.interaction_strength);
  o.noise = doc.value("noise", o.noise);
  o.modality_offset = doc.value("modality_offset", o.modality_offset);
  o.text_class_bias = doc.value("text_class_bias", o.text_class_bias);
  o.seed = doc.value("seed", o.seed);
  return o;
}

std::string toy_class_name(std::size_t c) { return "class" + std::to_string(c); }
std::string toy_domain_name(std::size_t k) { return "domain" + std::to_string(k); }

namespace {

std::string attribute_phrase(std::size_t c, std::size_t j) {
  return "with " + toy_class_name(c) + " trait " + std::to_string(j);
}

// Gram-Schmidt on Gaussian rows; redraws a row that collapses.
Matrix random_orthonormal(std::size_t d, Rng& rng) {
  Matrix q(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    for (;;) {
      Vector v = standard_normal(rng, d);
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t p = 0; p < r; ++p) {
          const double proj = dot(v, q.row(p));
          for (std::size_t i = 0; i < d; ++i) v[i] -= proj * q(p, i);
        }
      }
      const double n = l2_norm(v);
      if (n > 1e-6) {
        for (std::size_t i = 0; i < d; ++i) q(r, i) = v[i] / n;
        break;
      }
    }
  }
  return q;
}

// `count` unit vectors in the span of basis rows [first, last): orthonormal
// while the block has room, independent random directions after that.
std::vector<Vector> random_frame(const Matrix& basis, std::size_t first, std::size_t last, std::size_t count, Rng& rng) {
  const std::size_t d = basis.cols();
  std::vector<Vector> out;
  for (std::size_t n = 0; n < count; ++n) {
    for (;;) {
      const Vector coeffs = standard_normal(rng, last - first);
      Vector v(d, 0.0);
      for (std::size_t r = first; r < last; ++r) {
        for (std::size_t i = 0; i < d; ++i) v[i] += coeffs[r - first] * basis(r, i);
      }
      if (n < last - first) {
        for (int pass = 0; pass < 2; ++pass) {
          for (const auto& p : out) {
            const double proj = dot(v, p);
            for (std::size_t i = 0; i < d; ++i) v[i] -= proj * p[i];
          }
        }
      }
      if (l2_norm(v) > 1e-6) {
        normalize_in_place(v);
        out.push_back(std::move(v));
        break;
      }
    }
  }
  return out;
}

void add_scaled(Vector& acc, double alpha, std::span<const double> v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += alpha * v[i];
}

}  // namespace

ToyFixture generate_toy_fixture(const ToyFixtureOptions& options) {
  options.validate();
  const std::size_t C = options.classes;
  const std::size_t D = options.domains;
  const std::size_t A = options.attributes_per_class;
  const std::size_t d = options.dim;
  const std::size_t residual = C + D + 1;

  ToyFixture fx;
  fx.options = options;

  Rng geometry = make_rng(options.seed, streams::kFixture);
  fx.basis = random_orthonormal(d, geometry);
  const auto mu = [&](std::size_t c) { return fx.basis.row(c); };
  const auto nu = [&](std::size_t k) { return fx.basis.row(C + k); };
  const auto modality = fx.basis.row(C + D);

  // Residual subspace: attribute block, then interaction block.
  const std::size_t split = residual + (d - residual + 1) / 2;
  std::vector<Vector> attr;  // a_cj at c * A + j
  for (std::size_t c = 0; c < C; ++c) {
    for (auto& a : random_frame(fx.basis, residual, split, A, geometry)) attr.push_back(std::move(a));
  }
  std::vector<Vector> inter;  // w_kcj at (k * C + c) * A + j
  for (std::size_t kc = 0; kc < D * C; ++kc) {
    for (auto& w : random_frame(fx.basis, split, d, A, geometry)) inter.push_back(std::move(w));
  }

  fx.biased_class.assign(D, -1);
  for (std::size_t k = 1; k < D; ++k) fx.biased_class[k] = static_cast<int>(uniform_index(geometry, C));

  std::vector<std::string> class_names(C), domain_names(D);
  for (std::size_t c = 0; c < C; ++c) class_names[c] = toy_class_name(c);
  for (std::size_t k = 0; k < D; ++k) domain_names[k] = toy_domain_name(k);

  const double s = options.dispersion;
  fx.cell_centroids.resize(D * C, d);
  for (std::size_t k = 0; k < D; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      Vector v(mu(c).begin(), mu(c).end());
      add_scaled(v, options.domain_shift, nu(k));
      normalize_in_place(v);
      std::copy(v.begin(), v.end(), fx.cell_centroids.row(k * C + c).begin());
    }
  }

  // Images, grouped by domain then class. Attribute j cycles within a cell so
  // every attribute is represented.
  Rng sampling = make_rng(derive_seed(options.seed, 1), streams::kFixture);
  fx.images = FeatureMatrix(d);
  fx.images.set_class_names(class_names);
  fx.images.set_domain_names(domain_names);
  const double noise_scale = 1.0 / std::sqrt(static_cast<double>(d));
  char id[64];
  for (std::size_t k = 0; k < D; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < options.samples_per_cell; ++i) {
        const std::size_t j = i % A;
        Vector v(mu(c).begin(), mu(c).end());
        add_scaled(v, options.domain_shift, nu(k));
        add_scaled(v, s * options.attribute_strength, attr[c * A + j]);
        add_scaled(v, s * options.interaction_strength, inter[(k * C + c) * A + j]);
        const Vector xi = standard_normal(sampling, d);
        add_scaled(v, s * options.noise * noise_scale, xi);
        normalize_in_place(v);
        std::snprintf(id, sizeof id, "%s/%s/%04zu", domain_names[k].c_str(), class_names[c].c_str(), i);
        fx.images.add_row(v, static_cast<int>(c), static_cast<int>(k), id);
      }
    }
  }

  fx.templates.class_prompt = "a photo of a {class}.";
  fx.templates.source = "a " + domain_names[0] + " photo of a {class}.";
  for (std::size_t k = 1; k < D; ++k) {
    fx.templates.targets.emplace_back(domain_names[k], "a " + domain_names[k] + " photo of a {class}.");
  }

  // Text side.
  std::map<std::string, Vector> texts;
  auto text_point = [&](std::size_t c, const std::size_t* k, const std::size_t* j) {
    Vector v(mu(c).begin(), mu(c).end());
    if (k) add_scaled(v, options.domain_shift, nu(*k));
    if (k && fx.biased_class[*k] >= 0) add_scaled(v, options.text_class_bias, mu(static_cast<std::size_t>(fx.biased_class[*k])));
    if (j) add_scaled(v, s * options.attribute_strength, attr[c * A + *j]);
    if (k && j) add_scaled(v, s * options.interaction_strength, inter[(*k * C + c) * A + *j]);
    add_scaled(v, options.modality_offset, modality);
    normalize_in_place(v);
    return v;
  };
  auto template_for = [&](std::size_t k) -> const std::string& {
    return k == 0 ? fx.templates.source : fx.templates.target_for(domain_names[k]);
  };

  Matrix prompts(C, d);
  std::vector<std::vector<Attribute>> per_class(C);
  for (std::size_t c = 0; c < C; ++c) {
    const Vector prompt = text_point(c, nullptr, nullptr);
    texts[expand_template(fx.templates.class_prompt, class_names[c])] = prompt;
    std::copy(prompt.begin(), prompt.end(), prompts.row(c).begin());
    for (std::size_t j = 0; j < A; ++j) {
      Vector p(attr[c * A + j]);
      add_scaled(p, options.modality_offset, modality);
      normalize_in_place(p);
      const std::string phrase = attribute_phrase(c, j);
      texts[phrase] = p;
      per_class[c].push_back({phrase, phrase_key(phrase), normalize(p)});
    }
    for (std::size_t k = 0; k < D; ++k) {
      const std::string sentence = expand_template(template_for(k), class_names[c]);
      texts[sentence] = text_point(c, &k, nullptr);
      for (std::size_t j = 0; j < A; ++j) {
        texts[attach_attribute(sentence, attribute_phrase(c, j))] = text_point(c, &k, &j);
      }
    }
  }
  fx.class_bank = ClassTextBank(class_names, prompts);
  fx.attributes = AttributeBank(class_names, std::move(per_class), Provenance::offline_fixture);

  fx.text_cache = FeatureMatrix(d);
  for (const auto& [text, v] : texts) fx.text_cache.add_row(v, kUnlabeled, -1, phrase_key(text));
  return fx;
}

void write_toy_fixture(const fs::path& dir, const ToyFixture& fixture) {
  fs::create_directories(dir);
  write_feature_cache(dir / "features", fixture.images);
  write_feature_cache(dir / "text_cache", fixture.text_cache);
  fixture.attributes.save(dir / "attributes.json");
  fixture.templates.save(dir / "templates.json");

  json transform = {{"options", fixture.options.to_json()},
                    {"basis", fixture.basis.values()},
                    {"cell_centroids", fixture.cell_centroids.values()},
                    {"biased_class", fixture.biased_class},
                    {"dim", fixture.options.dim}};
  std::ofstream(dir / "fixture.json", std::ios::trunc) << transform.dump(2) << '\n';

  ExperimentConfig cfg;
  cfg.dataset = "toy";
  cfg.source_domain = toy_domain_name(0);
  for (std::size_t k = 1; k < fixture.options.domains; ++k) cfg.target_domains.push_back(toy_domain_name(k));
  cfg.shots = 16;
  cfg.loss.top_k = 1;  // each toy image carries exactly one attribute
  cfg.stage1 = {1e-2, 5e-2, 100, 32, 0};
  cfg.stage2 = {2e-3, 5e-4, 100, 32, 0};
  cfg.seeds = {fixture.options.seed};
  cfg.paths.feature_cache = "features";
  cfg.paths.text_cache = "text_cache";
  cfg.paths.attribute_bank = "attributes.json";
  cfg.paths.templates = "templates.json";
  cfg.paths.output_dir = "runs";
  cfg.save(dir / "config.json");
}

}  // namespace ldfs
