#pragma once

// Score fusion across modalities: equal-weight average, per-relation
// RankBoost weights, and an instance-specific one-hidden-layer meta-learner.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "mose/decoder.hpp"
#include "mose/kg.hpp"
#include "mose/matrix.hpp"
#include "mose/params.hpp"

namespace mose {

ScoreTensor combine_weighted(std::span<const ScoreTensor> scores,
                             std::span<const double> weights);
/// combine_weighted with weight 1/|M| for every modality.
ScoreTensor combine_average(std::span<const ScoreTensor> scores);

// ---------------------------------------------------------------------------
// Relation-aware boosting

struct RelationWeights {
  std::vector<Modality> modalities;  // order of every weight vector
  std::map<RelationId, std::vector<double>> per_relation;
  std::vector<double> fallback;

  const std::vector<double>& for_relation(RelationId r) const;
  friend bool operator==(const RelationWeights&, const RelationWeights&) = default;
};

/// Row b of the result uses the weights of queries[b].relation.
ScoreTensor combine_boosting(std::span<const ScoreTensor> scores,
                             std::span<const Triple> queries,
                             const RelationWeights& weights);

struct RankBoostConfig {
  std::size_t max_pairs_per_query = 500;
  double epsilon = 1e-10;
  std::uint64_t seed = 0;
};

/// 0.5 * ln((mass on +1 + eps) / (mass on -1 + eps)).
double rankboost_candidate_weight(std::span<const double> distribution,
                                  std::span<const std::int8_t> indicators,
                                  double epsilon);

struct BoostingRound {
  Modality chosen = Modality::kStructure;
  double weight = 0.0;
  std::vector<double> candidate_weights;  // NaN for already-chosen modalities
  double distribution_sum = 0.0;          // after reweighting
  double distribution_min = 0.0;
};

struct RelationTrace {
  RelationId relation = 0;
  std::size_t num_pairs = 0;
  std::vector<BoostingRound> rounds;
};

struct RankBoostResult {
  RelationWeights weights;
  std::vector<RelationTrace> traces;
};

/// Fits per-relation modality weights on the meta-set. scores[m] row b holds
/// modality m's scores for queries[b].
RankBoostResult fit_rankboost(std::span<const Triple> queries,
                              std::span<const ScoreTensor> scores,
                              const FilterIndex& filter,
                              const RankBoostConfig& config);

// ---------------------------------------------------------------------------
// Meta-learner

struct MetaLearnerParams {
  std::size_t hidden = 0;
  Matrix w1;               // |M| x H
  std::vector<double> b1;  // H
  Matrix w2;               // H x |M|
  std::vector<double> b2;  // |M|

  static MetaLearnerParams zeros(std::size_t modalities, std::size_t hidden);
  std::size_t num_modalities() const { return w1.rows; }
  std::vector<double*> flat();  // every scalar, in a fixed order
  bool all_finite() const;
  friend bool operator==(const MetaLearnerParams&, const MetaLearnerParams&) = default;
};

/// Per-modality mean/std of meta-set scores.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(std::span<const ScoreTensor> scores);
  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

struct MetaLearner {
  std::vector<Modality> modalities;
  Standardizer standardizer;
  MetaLearnerParams params;
  friend bool operator==(const MetaLearner&, const MetaLearner&) = default;
};

struct MetaLearnerConfig {
  std::size_t hidden = 100;
  double learning_rate = 0.01;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  int patience = 5;
  double init_scale = 0.1;
  std::uint64_t seed = 0;
};

/// softmax(W2^T relu(W1^T x + b1) + b2) for a standardized score vector x.
std::vector<double> metalearner_weights(const MetaLearnerParams& params,
                                        std::span<const double> x);

/// CE of one query over its candidates. `inputs` is |E| x |M| standardized
/// scores; candidates with mask[e] == 0 are excluded from the softmax. When
/// `grad` is non-null the gradient is accumulated into it, scaled by `scale`.
double metalearner_query_loss(const MetaLearnerParams& params,
                              const Matrix& inputs,
                              std::span<const std::uint8_t> mask,
                              EntityId gold, MetaLearnerParams* grad = nullptr,
                              double scale = 1.0);

struct MetaLearnerFitLog {
  std::vector<double> epoch_loss;
  std::size_t best_epoch = 0;
};

MetaLearner fit_metalearner(std::span<const Triple> queries,
                            std::span<const ScoreTensor> scores,
                            const FilterIndex& filter,
                            const MetaLearnerConfig& config,
                            MetaLearnerFitLog* log = nullptr);

/// Untrained learner (seeded initialization, standardizer from `scores`).
MetaLearner init_metalearner(std::span<const ScoreTensor> scores,
                             const MetaLearnerConfig& config);

ScoreTensor combine_metalearner(std::span<const ScoreTensor> scores,
                                const MetaLearner& learner);

}  // namespace mose
