#include "mose/features.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "mose/error.hpp"

namespace mose {

FeatureMatrix load_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string what = path.string();
  detail::expect_magic(in, "MSEF", what);
  const auto version = detail::read_le<std::uint32_t>(in, what);
  if (version != kFeatureFormatVersion) {
    throw FormatError(what + ": unsupported MSEF version " +
                      std::to_string(version));
  }
  const auto rows = detail::read_le<std::uint32_t>(in, what);
  const auto cols = detail::read_le<std::uint32_t>(in, what);
  FeatureMatrix features(rows, cols);
  for (auto& v : features.data) {
    v = detail::read_le<float>(in, what + " payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(what + ": trailing bytes after payload");
  }
  for (double v : features.data) {
    if (!std::isfinite(v)) throw FormatError(what + ": non-finite value");
  }
  return features;
}

void write_feature_file(const FeatureMatrix& features,
                        const std::filesystem::path& path) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (features.rows > kMax || features.cols > kMax) {
    throw ShapeError("feature matrix too large for MSEF");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  detail::write_magic(out, "MSEF");
  detail::write_le<std::uint32_t>(out, kFeatureFormatVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.rows));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.cols));
  for (double v : features.data) {
    detail::write_le<float>(out, static_cast<float>(v));
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

void validate_features(const FeatureMatrix& features, std::size_t num_entities,
                       const std::string& what) {
  if (features.rows != num_entities) {
    throw FormatError(what + " has " + std::to_string(features.rows) +
                      " rows but the vocabulary has " +
                      std::to_string(num_entities) + " entities");
  }
  if (features.cols == 0) throw FormatError(what + " has zero columns");
  for (double v : features.data) {
    if (!std::isfinite(v)) throw FormatError(what + ": non-finite value");
  }
}

}  // namespace mose
