#pragma once

// Dataset directories, run bundles and the resolved run configuration.

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "mose/ensemble.hpp"
#include "mose/kg.hpp"
#include "mose/params.hpp"
#include "mose/trainer.hpp"

namespace mose {

struct Dataset {
  Vocabulary vocab;
  TripleStore store;  // reciprocal-augmented
  FeatureBank features;
};

/// Reads train/valid/test.tsv from `dir`. If entities.tsv and relations.tsv
/// exist they fix the vocabulary and unseen names are errors; otherwise the
/// vocabulary grows in train, valid, test order. visual.msef and text.msef
/// are optional and validated against |E|.
Dataset load_dataset_dir(const std::filesystem::path& dir);

/// bundle.bin layout (little-endian): "MSEB", u32 version, u32 |E|, u32 |R|,
/// then for train, valid, test: u64 count and count x (u32 head, u32
/// relation, u32 tail) of augmented triples. Vocabulary and feature files sit
/// beside it in the run directory.
void write_run_bundle(const Dataset& dataset, const std::filesystem::path& run_dir);
Dataset load_run_bundle(const std::filesystem::path& run_dir);

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;
  TrainConfig train;
  RankBoostConfig rankboost;
  MetaLearnerConfig meta_learner;

  /// Copies `seed` into every sub-config.
  void propagate_seed();
};

nlohmann::ordered_json to_json(const RunConfig& config);
/// Overlays `j` on `base`; unknown keys are config errors.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

InitOptions init_options(const RunConfig& config, const Dataset& dataset);

}  // namespace mose
