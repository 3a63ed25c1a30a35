#include "ldfs/cache_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace ldfs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

void write_f32_blob(const fs::path& file, std::span<const double> values) {
  std::vector<std::uint32_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto f = static_cast<float>(values[i]);
    words[i] = to_little_endian(std::bit_cast<std::uint32_t>(f));
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + file.string() + " for writing");
  out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out) throw FormatError("short write to " + file.string());
}

std::vector<double> read_f32_blob(const fs::path& file, std::size_t count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open " + file.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != count * sizeof(std::uint32_t)) {
    throw FormatError(file.string() + ": expected " + std::to_string(count * 4) + " bytes, found " + std::to_string(bytes));
  }
  in.seekg(0);
  std::vector<std::uint32_t> words(count);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(bytes));
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(to_little_endian(words[i]));
  return out;
}

void write_feature_cache(const fs::path& dir, const FeatureMatrix& features) {
  fs::create_directories(dir);
  json records = json::array();
  for (std::size_t i = 0; i < features.size(); ++i) {
    records.push_back({{"id", features.instance_id(i)}, {"label", features.label(i)}, {"domain", features.domain(i)}});
  }
  const json manifest = {
      {"format", "ldfs-feature-cache"},
      {"version", 1},
      {"dim", features.dim()},
      {"dtype", "float32"},
      {"byte_order", "little"},
      {"rows", features.size()},
      {"normalized", !features.raw()},
      {"class_names", features.class_names()},
      {"domain_names", features.domain_names()},
      {"records", records},
  };
  std::ofstream out(dir / kCacheManifestName, std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest in " + dir.string());
  out << manifest.dump(1) << '\n';
  write_f32_blob(dir / kCacheBlobName, features.values());
}

FeatureMatrix read_feature_cache(const fs::path& dir) {
  std::ifstream in(dir / kCacheManifestName);
  if (!in) throw FormatError("no feature cache manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + ": malformed manifest: " + e.what());
  }
  try {
    if (manifest.at("dtype").get<std::string>() != "float32") throw FormatError("unsupported dtype in " + dir.string());
    const auto dim = manifest.at("dim").get<std::size_t>();
    const auto rows = manifest.at("rows").get<std::size_t>();
    const bool normalized = manifest.value("normalized", true);
    const auto& records = manifest.at("records");
    if (records.size() != rows) throw FormatError(dir.string() + ": record count does not match row count");
    if (dim == 0) throw FormatError(dir.string() + ": zero dimension");

    const auto values = read_f32_blob(dir / kCacheBlobName, rows * dim);
    FeatureMatrix out(dim, !normalized);
    out.set_class_names(manifest.value("class_names", std::vector<std::string>{}));
    out.set_domain_names(manifest.value("domain_names", std::vector<std::string>{}));
    const auto n_classes = static_cast<int>(out.class_names().size());
    const auto n_domains = static_cast<int>(out.domain_names().size());
    for (std::size_t i = 0; i < rows; ++i) {
      const auto& rec = records[i];
      const int label = rec.at("label").get<int>();
      const int domain = rec.at("domain").get<int>();
      if (label != kUnlabeled && n_classes > 0 && (label < 0 || label >= n_classes)) {
        throw FormatError(dir.string() + ": label out of range at row " + std::to_string(i));
      }
      if (n_domains > 0 && (domain < 0 || domain >= n_domains)) {
        throw FormatError(dir.string() + ": domain out of range at row " + std::to_string(i));
      }
      out.add_row(std::span<const double>(values.data() + i * dim, dim), label, domain, rec.at("id").get<std::string>());
    }
    return out;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
}

}  // namespace ldfs
