#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mose/decoder.hpp"
#include "mose/ensemble.hpp"
#include "mose/kg.hpp"
#include "mose/params.hpp"
#include "mose/trainer.hpp"

namespace mose {

/// Optimistic filtered rank: 1 + number of non-filtered candidates scoring
/// strictly above the gold entity. `filter_set` must be sorted.
std::size_t filtered_rank(std::span<const double> scores, EntityId gold,
                          std::span<const EntityId> filter_set);

struct RankMetrics {
  std::size_t count = 0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  double mr = 0.0;
  double mrr = 0.0;

  static RankMetrics from_ranks(std::span<const std::size_t> ranks);
  friend bool operator==(const RankMetrics&, const RankMetrics&) = default;
};

struct MetricsReport {
  RankMetrics overall;
  RankMetrics tail;  // base relations
  RankMetrics head;  // reciprocal relations
  std::map<RelationId, RankMetrics> by_relation;
  std::vector<std::size_t> ranks;  // per query, input order

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

struct InferenceMode {
  enum class Kind { kAverage, kBoosting, kMetaLearner, kSingle };
  Kind kind = Kind::kAverage;
  Modality modality = Modality::kStructure;  // for kSingle

  static InferenceMode average() { return {Kind::kAverage, Modality::kStructure}; }
  static InferenceMode boosting() { return {Kind::kBoosting, Modality::kStructure}; }
  static InferenceMode meta_learner() {
    return {Kind::kMetaLearner, Modality::kStructure};
  }
  static InferenceMode single(Modality m) { return {Kind::kSingle, m}; }

  /// "ai", "bi", "mi" or "single:<modality>".
  static InferenceMode parse(std::string_view text);
  std::string name() const;
};

struct EnsembleModel {
  std::optional<RelationWeights> boosting;
  std::optional<MetaLearner> meta;
};

/// Per-modality scores for every query, in params.modalities() order.
std::vector<ScoreTensor> modality_scores(const ModelParams& params,
                                         std::span<const Triple> queries);

/// Fused B x |E| scores under the requested inference mode.
Matrix fused_scores(const ModelParams& params, std::span<const Triple> queries,
                    const InferenceMode& mode, const EnsembleModel* ensemble);

/// Filtered-rank metrics over reciprocal-augmented queries.
MetricsReport evaluate(std::span<const Triple> queries,
                       const ModelParams& params, const FilterIndex& filter,
                       const InferenceMode& mode, const EnsembleModel* ensemble,
                       std::size_t batch_size = 256);

nlohmann::ordered_json to_json(const RankMetrics& m);
nlohmann::ordered_json to_json(const MetricsReport& report);
/// Header + one row per direction; MR rounded to an integer.
std::string metrics_tsv(const std::string& label, const MetricsReport& report);

struct SweepRow {
  double temperature = 0.0;
  MetricsReport report;
};

/// Trains one model per temperature from identical seeds and reports
/// average-ensemble metrics on `eval_split`. `init` supplies the parameter
/// shapes; its seed, dim, modalities and tying are taken from `base`.
std::vector<SweepRow> temperature_sweep(const TripleStore& store,
                                        const FilterIndex& filter,
                                        const FeatureBank& features,
                                        const InitOptions& init,
                                        const TrainConfig& base,
                                        std::span<const double> temperatures,
                                        Split eval_split = Split::kTest);

std::vector<double> default_temperature_grid();
std::string sweep_tsv(std::span<const SweepRow> rows);

}  // namespace mose
