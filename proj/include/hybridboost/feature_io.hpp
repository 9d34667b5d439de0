#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hybridboost/matrix.hpp"

namespace hybridboost::data {

inline constexpr std::uint32_t kFeatureFileVersion = 1;

/// "DBFS" | u32 version | u32 n | u32 d | n x (i32 label, d x f32), all
/// little-endian. Values are stored as 32-bit floats.
std::vector<std::uint8_t> encode_feature_file(const FeatureMatrix& features);
FeatureMatrix decode_feature_file(std::vector<std::uint8_t> bytes, const std::string& origin);

void write_feature_file(const FeatureMatrix& features, const std::filesystem::path& path);

/// Reads the binary layout, or CSV with header `label,f0,f1,...` when the
/// file does not start with the binary magic. source_tag is the file stem.
FeatureMatrix read_feature_file(const std::filesystem::path& path);

void write_feature_csv(const FeatureMatrix& features, const std::filesystem::path& path);

}  // namespace hybridboost::data
