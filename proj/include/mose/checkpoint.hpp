#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "mose/ensemble.hpp"
#include "mose/params.hpp"
#include "mose/trainer.hpp"

namespace mose {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume or evaluate a run.
///
/// File layout (little-endian): "MSEC", u32 version, u64 header length, a
/// JSON header, then float64 blocks in the order the header's "blocks" array
/// lists them:
///   1. model tensors, in ModelParams::tensor_names() order
///   2. "adagrad/<tensor>" accumulators, same order (omitted when empty)
///   3. section BI: "BI/weights" (one row per relation in header order),
///      "BI/fallback"
///   4. section MI: "MI/mean", "MI/stddev", "MI/w1", "MI/b1", "MI/w2", "MI/b2"
/// Frozen feature matrices are not stored.
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  std::size_t num_entities = 0;
  std::size_t num_base_relations = 0;
  ModelParams params;
  AdagradState optimizer;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::string rng_state;
  /// Section AI: uniform weights were recorded by fit-ensemble.
  bool has_average = false;
  std::optional<RelationWeights> boosting;  // section BI
  std::optional<MetaLearner> meta;          // section MI
};

/// FNV-1a over the compact JSON dump.
std::uint64_t config_hash(const nlohmann::json& config);

void save_checkpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const FeatureBank& features);

}  // namespace mose
