#pragma once

// Instance-conditional text descriptions: attribute ranking, template
// composition, text encoding and stochastic text-feature perturbation.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ldfs/feature_core.hpp"
#include "ldfs/random.hpp"

namespace ldfs {

/// Raised when a phrase has no embedding and no encoder service is set.
class MissingPhrase : public Error {
 public:
  explicit MissingPhrase(std::string phrase)
      : Error("no text embedding for phrase \"" + phrase + "\""), phrase_(std::move(phrase)) {}
  const std::string& phrase() const noexcept { return phrase_; }

 private:
  std::string phrase_;
};

/// Cache key of a phrase: 64-bit FNV-1a as 16 lowercase hex digits.
std::string phrase_key(std::string_view phrase);

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  /// Unit-norm embeddings, one per text.
  virtual std::vector<UnitVector> encode(std::span<const std::string> texts) = 0;

  UnitVector encode_one(const std::string& text);
};

/// Lookup in a text-embedding cache whose instance ids are phrase keys.
class CachedTextEncoder : public TextEncoder {
 public:
  explicit CachedTextEncoder(FeatureMatrix cache);

  std::size_t dim() const override { return cache_.dim(); }
  std::vector<UnitVector> encode(std::span<const std::string> texts) override;
  bool contains(std::string_view text) const;

 private:
  FeatureMatrix cache_;
  std::vector<std::pair<std::string, std::size_t>> index_;  // sorted by key
};

/// Client for an HTTP encoder: POST {"texts": [...]} to the URL, answer is
/// either a bare array of float arrays or {"embeddings": [...]}.
class HttpTextEncoder : public TextEncoder {
 public:
  HttpTextEncoder(std::string url, std::size_t dim);
  std::size_t dim() const override { return dim_; }
  std::vector<UnitVector> encode(std::span<const std::string> texts) override;

 private:
  std::string url_;
  std::size_t dim_;
};

/// Cache first; phrases the cache lacks go to the fallback in one request.
class ChainedTextEncoder : public TextEncoder {
 public:
  ChainedTextEncoder(std::unique_ptr<CachedTextEncoder> cache, std::unique_ptr<TextEncoder> fallback);
  std::size_t dim() const override { return cache_->dim(); }
  std::vector<UnitVector> encode(std::span<const std::string> texts) override;

 private:
  std::unique_ptr<CachedTextEncoder> cache_;
  std::unique_ptr<TextEncoder> fallback_;
};

inline constexpr const char* kTextEncoderUrlEnv = "LDFS_TEXT_ENCODER_URL";

/// Offline encoder over `cache`, chained to an HttpTextEncoder when
/// LDFS_TEXT_ENCODER_URL is set.
std::unique_ptr<TextEncoder> make_text_encoder(FeatureMatrix cache);

struct Attribute {
  std::string phrase;
  std::string key;
  UnitVector embedding;
};

enum class Provenance { offline_fixture, external_service };

/// Per-class attribute phrases with their text embeddings.
class AttributeBank {
 public:
  AttributeBank() = default;
  AttributeBank(std::vector<std::string> class_names, std::vector<std::vector<Attribute>> per_class,
                Provenance provenance = Provenance::offline_fixture);

  /// Reads the JSON bank file and embeds every phrase with `encoder`.
  /// Classes are reordered to `class_names`; each must be present.
  static AttributeBank load(const std::filesystem::path& file, TextEncoder& encoder,
                            const std::vector<std::string>& class_names);
  void save(const std::filesystem::path& file) const;

  std::size_t class_count() const noexcept { return per_class_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  const std::vector<Attribute>& attributes(int class_id) const;
  Provenance provenance() const noexcept { return provenance_; }

 private:
  std::vector<std::string> class_names_;
  std::vector<std::vector<Attribute>> per_class_;
  Provenance provenance_ = Provenance::offline_fixture;
};

struct RankedAttribute {
  std::string phrase;
  std::size_t index;  // position in the class's attribute list
  double score;       // cosine to the image feature
};

/// Class attributes ordered by descending cosine to `image`, ties by phrase;
/// at most `top_k` entries.
std::vector<RankedAttribute> rank_attributes(const UnitVector& image, int class_id, const AttributeBank& bank,
                                             std::size_t top_k);

/// Source/target templates with a single {class} placeholder each.
struct DescriptionTemplates {
  std::string class_prompt = "a photo of a {class}.";
  std::string source;
  std::vector<std::pair<std::string, std::string>> targets;  // domain name -> template

  void validate() const;
  const std::string& target_for(std::string_view domain) const;

  static DescriptionTemplates load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;
};

/// Substitutes the class name; throws ConfigError unless the template has
/// exactly one {class} and no other placeholder.
std::string expand_template(std::string_view tmpl, std::string_view class_name);

/// "<sentence without final period>, <attribute>." or the sentence
/// unchanged for an empty attribute.
std::string attach_attribute(std::string_view sentence, std::string_view attribute);

struct DescriptionTexts {
  std::string source;
  std::string target;
};

DescriptionTexts compose_description_texts(std::string_view class_name, std::string_view attribute,
                                           const DescriptionTemplates& templates, std::string_view target_domain);

struct InstanceDescriptionPair {
  UnitVector source;
  UnitVector target;
  int target_domain = -1;
  std::string attribute;
};

InstanceDescriptionPair compose_instance_descriptions(std::string_view class_name, std::string_view attribute,
                                                      const DescriptionTemplates& templates, int target_domain,
                                                      std::string_view target_domain_name, TextEncoder& encoder);

/// normalize(t + gamma * z). gamma == 0 returns `t` untouched.
UnitVector perturb_text(const UnitVector& t, double gamma, std::span<const double> z);
UnitVector perturb_text(const UnitVector& t, double gamma, Rng& rng);
UnitVector perturb_text(const UnitVector& t, double gamma, std::uint64_t seed);

/// Perturbs both members of a pair; one shared z unless `independent`.
InstanceDescriptionPair perturb_pair(const InstanceDescriptionPair& pair, double gamma, Rng& rng,
                                     bool independent = false);

}  // namespace ldfs
