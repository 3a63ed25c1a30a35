#pragma once

// On-disk feature cache: a directory holding `manifest.json` (dimension,
// dtype, row count, class/domain names, one record per row) and
// `features.f32`, N x d little-endian float32 values in row-major order.
// The same float32 layout is used for mapper and probe weight blobs.

#include <filesystem>
#include <span>
#include <vector>

#include "ldfs/feature_core.hpp"

namespace ldfs {

inline constexpr const char* kCacheManifestName = "manifest.json";
inline constexpr const char* kCacheBlobName = "features.f32";

void write_feature_cache(const std::filesystem::path& dir, const FeatureMatrix& features);
FeatureMatrix read_feature_cache(const std::filesystem::path& dir);

/// Writes `values` as little-endian float32.
void write_f32_blob(const std::filesystem::path& file, std::span<const double> values);
/// Reads exactly `count` little-endian float32 values.
std::vector<double> read_f32_blob(const std::filesystem::path& file, std::size_t count);

}  // namespace ldfs
