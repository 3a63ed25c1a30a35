#include <algorithm>
#include <cstdlib>

#include "httplib.h"
#include "json.hpp"
#include "ldfs/text_engine.hpp"

namespace ldfs {

using nlohmann::json;

CachedTextEncoder::CachedTextEncoder(FeatureMatrix cache) : cache_(std::move(cache)) {
  index_.reserve(cache_.size());
  for (std::size_t i = 0; i < cache_.size(); ++i) index_.emplace_back(cache_.instance_id(i), i);
  std::sort(index_.begin(), index_.end());
  for (std::size_t i = 1; i < index_.size(); ++i) {
    if (index_[i].first == index_[i - 1].first) throw FormatError("text cache has duplicate key " + index_[i].first);
  }
}

namespace {
const std::pair<std::string, std::size_t>* find_key(const std::vector<std::pair<std::string, std::size_t>>& index,
                                                   const std::string& key) {
  const auto it = std::lower_bound(index.begin(), index.end(), key,
                                   [](const auto& entry, const std::string& k) { return entry.first < k; });
  return (it != index.end() && it->first == key) ? &*it : nullptr;
}
}  // namespace

bool CachedTextEncoder::contains(std::string_view text) const { return find_key(index_, phrase_key(text)) != nullptr; }

std::vector<UnitVector> CachedTextEncoder::encode(std::span<const std::string> texts) {
  std::vector<UnitVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const auto* hit = find_key(index_, phrase_key(t));
    if (hit == nullptr) throw MissingPhrase(t);
    out.push_back(normalize(cache_.row(hit->second)));
  }
  return out;
}

HttpTextEncoder::HttpTextEncoder(std::string url, std::size_t dim) : url_(std::move(url)), dim_(dim) {
  if (url_.rfind("http://", 0) != 0 && url_.rfind("https://", 0) != 0) {
    throw ConfigError(std::string(kTextEncoderUrlEnv) + " must be an http(s) URL, got '" + url_ + "'");
  }
}

std::vector<UnitVector> HttpTextEncoder::encode(std::span<const std::string> texts) {
  if (texts.empty()) return {};
  const auto scheme_end = url_.find("://") + 3;
  const auto path_start = url_.find('/', scheme_end);
  const std::string origin = url_.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url_.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(10);
  client.set_read_timeout(120);
  const json body = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto res = client.Post(path, body.dump(), "application/json");
  if (!res) throw Error("text encoder service at " + url_ + " unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error("text encoder service returned HTTP " + std::to_string(res->status));

  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::exception& e) {
    throw FormatError(std::string("text encoder reply is not JSON: ") + e.what());
  }
  const json& rows = reply.is_object() ? reply.at("embeddings") : reply;
  if (!rows.is_array() || rows.size() != texts.size()) {
    throw FormatError("text encoder returned " + std::to_string(rows.size()) + " embeddings for " +
                      std::to_string(texts.size()) + " texts");
  }
  std::vector<UnitVector> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    const auto v = r.get<std::vector<double>>();
    if (v.size() != dim_) throw DimensionMismatch("text encoder returned dimension " + std::to_string(v.size()));
    out.push_back(normalize(v));
  }
  return out;
}

ChainedTextEncoder::ChainedTextEncoder(std::unique_ptr<CachedTextEncoder> cache, std::unique_ptr<TextEncoder> fallback)
    : cache_(std::move(cache)), fallback_(std::move(fallback)) {}

std::vector<UnitVector> ChainedTextEncoder::encode(std::span<const std::string> texts) {
  std::vector<std::string> missing;
  for (const auto& t : texts) {
    if (!cache_->contains(t)) missing.push_back(t);
  }
  if (missing.empty()) return cache_->encode(texts);
  auto fetched = fallback_->encode(missing);
  std::vector<UnitVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    if (cache_->contains(t)) {
      out.push_back(cache_->encode_one(t));
    } else {
      const auto pos = static_cast<std::size_t>(std::find(missing.begin(), missing.end(), t) - missing.begin());
      out.push_back(fetched[pos]);
    }
  }
  return out;
}

std::unique_ptr<TextEncoder> make_text_encoder(FeatureMatrix cache) {
  auto cached = std::make_unique<CachedTextEncoder>(std::move(cache));
  const char* url = std::getenv(kTextEncoderUrlEnv);
  if (url == nullptr || *url == '\0') return cached;
  const auto dim = cached->dim();
  return std::make_unique<ChainedTextEncoder>(std::move(cached), std::make_unique<HttpTextEncoder>(url, dim));
}

}  // namespace ldfs
