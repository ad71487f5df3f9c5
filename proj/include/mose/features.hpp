#pragma once

#include <cstdint>
#include <filesystem>

#include "mose/matrix.hpp"

namespace mose {

/// Frozen per-entity feature rows; row i belongs to entity id i.
using FeatureMatrix = Matrix;

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

/// MSEF layout (little-endian): "MSEF", u32 version, u32 rows, u32 cols,
/// rows*cols float32 row-major.
FeatureMatrix load_feature_file(const std::filesystem::path& path);
void write_feature_file(const FeatureMatrix& features,
                        const std::filesystem::path& path);

/// Checks row count against |E| and that every value is finite.
void validate_features(const FeatureMatrix& features, std::size_t num_entities,
                       const std::string& what = "feature matrix");

}  // namespace mose
