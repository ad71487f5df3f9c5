#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mose/ensemble.hpp"
#include "mose/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace mose {
namespace {

ScoreTensor tensor(Modality m, std::size_t rows, std::size_t cols,
                   std::vector<double> values) {
  ScoreTensor t;
  t.modality = m;
  t.values = Matrix(rows, cols);
  t.values.data = std::move(values);
  return t;
}

std::vector<ScoreTensor> random_scores(std::size_t rows, std::size_t cols,
                                       std::mt19937_64& rng) {
  std::vector<ScoreTensor> out;
  for (auto m : kAllModalities)
    out.push_back({m, testing::random_matrix(rows, cols, rng)});
  return out;
}

FilterIndex filter_for(const std::vector<Triple>& triples) {
  TripleStore store;
  store.valid = triples;
  store.augmented = true;
  return build_filter_index(store);
}

/// Meta-set over `entities` candidates where modality `good` scores the gold
/// tail highest and the others are noise.
struct Synthetic {
  std::vector<Triple> queries;
  std::vector<ScoreTensor> scores;
};

Synthetic synthetic(std::size_t good, std::size_t queries, std::size_t entities,
                    std::size_t relations, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<EntityId> ent(0, entities - 1);
  Synthetic s;
  for (std::size_t b = 0; b < queries; ++b)
    s.queries.push_back({ent(rng), static_cast<RelationId>(b % relations), ent(rng)});
  s.scores = random_scores(queries, entities, rng);
  for (std::size_t b = 0; b < queries; ++b) {
    auto row = s.scores[good].values.row(b);
    for (std::size_t e = 0; e < entities; ++e)
      row[e] = e == s.queries[b].tail ? 3.0 + row[e] * 0.1 : row[e] * 0.5;
  }
  return s;
}

TEST(CombineAverage, IdenticalInputsAreIdempotent) {
  std::mt19937_64 rng(1);
  auto s = testing::random_matrix(3, 5, rng);
  std::vector<ScoreTensor> in(3, ScoreTensor{Modality::kStructure, s});
  auto out = combine_average(in);
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_NEAR(out.values.data[i], s.data[i], 1e-15);
}

TEST(CombineAverage, ArithmeticExample) {
  std::vector<ScoreTensor> in{tensor(Modality::kStructure, 1, 2, {1, 0}),
                              tensor(Modality::kVisual, 1, 2, {0, 1}),
                              tensor(Modality::kText, 1, 2, {2, 2})};
  auto out = combine_average(in);
  EXPECT_DOUBLE_EQ(out.values(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(out.values(0, 1), 1.0);
}

TEST(CombineAverage, EqualsUniformWeights) {
  std::mt19937_64 rng(2);
  auto in = random_scores(4, 7, rng);
  std::vector<double> w(3, 1.0 / 3.0);
  EXPECT_EQ(combine_average(in).values, combine_weighted(in, w).values);
}

TEST(CombineAverage, ShapeMismatchIsError) {
  std::vector<ScoreTensor> in{tensor(Modality::kStructure, 1, 2, {1, 0}),
                              tensor(Modality::kVisual, 1, 3, {0, 1, 2})};
  EXPECT_THROW(combine_average(in), ShapeError);
}

TEST(CombineWeighted, ProjectionAndAnnihilation) {
  std::mt19937_64 rng(3);
  auto in = random_scores(2, 5, rng);
  std::vector<double> first{1, 0, 0}, zero{0, 0, 0};
  EXPECT_EQ(combine_weighted(in, first).values, in[0].values);
  for (double v : combine_weighted(in, zero).values.data) EXPECT_EQ(v, 0.0);
  std::vector<double> short_w{1.0, 2.0};
  EXPECT_THROW(combine_weighted(in, short_w), ShapeError);
}

TEST(CombineWeighted, MatchesNaiveLoop) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_scores(6, 11, rng);
    auto w = testing::random_vector(3, rng);
    auto out = combine_weighted(in, w);
    for (std::size_t b = 0; b < 6; ++b)
      for (std::size_t e = 0; e < 11; ++e) {
        double acc = 0.0;
        for (std::size_t m = 0; m < 3; ++m) acc += w[m] * in[m].values(b, e);
        EXPECT_NEAR(out.values(b, e), acc, 1e-12);
      }
  }
}

TEST(CombineWeighted, LinearInScoresAndWeights) {
  std::mt19937_64 rng(5);
  auto a = random_scores(2, 4, rng), b = random_scores(2, 4, rng);
  auto w = testing::random_vector(3, rng), v = testing::random_vector(3, rng);
  auto sum = a;
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t i = 0; i < 8; ++i) sum[m].values.data[i] += b[m].values.data[i];
  std::vector<double> wv(3);
  for (std::size_t m = 0; m < 3; ++m) wv[m] = w[m] + v[m];
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(combine_weighted(sum, w).values.data[i],
                combine_weighted(a, w).values.data[i] +
                    combine_weighted(b, w).values.data[i],
                1e-12);
    EXPECT_NEAR(combine_weighted(a, wv).values.data[i],
                combine_weighted(a, w).values.data[i] +
                    combine_weighted(a, v).values.data[i],
                1e-12);
  }
}

TEST(RankBoostWeight, ThreeOfFourCorrect) {
  std::vector<double> d(4, 0.25);
  std::vector<std::int8_t> h{1, 1, -1, 1};
  EXPECT_NEAR(rankboost_candidate_weight(d, h, 1e-10), 0.5 * std::log(3.0), 1e-9);
  EXPECT_NEAR(rankboost_candidate_weight(d, h, 1e-10), 0.5493, 1e-4);
}

TEST(RankBoostWeight, BalancedMassGivesZero) {
  std::vector<double> d{0.1, 0.4, 0.3, 0.2};
  std::vector<std::int8_t> h{1, 1, -1, -1};
  EXPECT_NEAR(rankboost_candidate_weight(d, h, 1e-10), 0.0, 1e-12);
}

TEST(RankBoostWeight, SignFollowsCorrectMass) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> d(9);
    std::vector<std::int8_t> h(9);
    double total = 0.0, plus = 0.0;
    for (std::size_t i = 0; i < 9; ++i) {
      total += d[i] = u(rng);
      h[i] = u(rng) < 0.5 ? 1 : -1;
    }
    for (std::size_t i = 0; i < 9; ++i) {
      d[i] /= total;
      if (h[i] > 0) plus += d[i];
    }
    const double w = rankboost_candidate_weight(d, h, 0.0);
    if (plus > 0.5 + 1e-12) EXPECT_GT(w, 0.0);
    if (plus < 0.5 - 1e-12) EXPECT_LT(w, 0.0);
  }
}

TEST(FitRankBoost, OneQueryFixture) {
  // Entities 0..5, gold 1, filtered true tail 2: candidates {0, 3, 4, 5}.
  std::vector<Triple> q{{0, 0, 1}};
  auto filter = filter_for({{0, 0, 1}, {0, 0, 2}});
  std::vector<ScoreTensor> s{
      tensor(Modality::kStructure, 1, 6, {0, 5, 9, 1, 2, 7}),
      tensor(Modality::kVisual, 1, 6, {9, 0, 0, 9, 9, 9}),
      tensor(Modality::kText, 1, 6, {0, 5, 0, 0, 0, 0})};
  auto r = fit_rankboost(q, s, filter, {});
  ASSERT_EQ(r.traces.size(), 1u);
  EXPECT_EQ(r.traces[0].num_pairs, 4u);
  const auto& round1 = r.traces[0].rounds[0];
  EXPECT_NEAR(round1.candidate_weights[0], 0.5 * std::log(3.0), 1e-9);
  EXPECT_EQ(round1.chosen, Modality::kText);
}

TEST(FitRankBoost, DistributionAndSelectionInvariants) {
  auto s = synthetic(1, 60, 25, 4, 7);
  auto filter = filter_for(s.queries);
  auto r = fit_rankboost(s.queries, s.scores, filter, {});
  ASSERT_EQ(r.traces.size(), 4u);
  for (const auto& trace : r.traces) {
    ASSERT_EQ(trace.rounds.size(), 3u);
    std::vector<int> picks(3, 0);
    for (const auto& round : trace.rounds) {
      EXPECT_NEAR(round.distribution_sum, 1.0, 1e-9);
      EXPECT_GE(round.distribution_min, 0.0);
      ++picks[index_of(round.chosen)];
    }
    EXPECT_EQ(picks, (std::vector<int>{1, 1, 1}));
    EXPECT_EQ(r.weights.per_relation.at(trace.relation).size(), 3u);
  }
}

TEST(FitRankBoost, PerfectModalityWinsEveryRelation) {
  for (std::size_t good = 0; good < 3; ++good) {
    auto s = synthetic(good, 80, 30, 4, 11 + good);
    auto r = fit_rankboost(s.queries, s.scores, filter_for(s.queries), {});
    for (const auto& trace : r.traces) {
      EXPECT_EQ(index_of(trace.rounds[0].chosen), good);
      const auto& w = r.weights.per_relation.at(trace.relation);
      for (std::size_t m = 0; m < 3; ++m)
        if (m != good) EXPECT_GT(w[good], w[m]);
    }
  }
}

TEST(FitRankBoost, FallbackIsPairWeightedMean) {
  auto s = synthetic(2, 30, 12, 3, 13);
  auto r = fit_rankboost(s.queries, s.scores, filter_for(s.queries), {});
  std::vector<double> expected(3, 0.0);
  double pairs = 0.0;
  for (const auto& trace : r.traces) {
    const auto& w = r.weights.per_relation.at(trace.relation);
    for (std::size_t m = 0; m < 3; ++m)
      expected[m] += static_cast<double>(trace.num_pairs) * w[m];
    pairs += static_cast<double>(trace.num_pairs);
  }
  for (std::size_t m = 0; m < 3; ++m)
    EXPECT_NEAR(r.weights.fallback[m], expected[m] / pairs, 1e-12);
  EXPECT_EQ(&r.weights.for_relation(99), &r.weights.fallback);
}

TEST(FitRankBoost, PairCapIsSeededSubsample) {
  auto s = synthetic(0, 10, 50, 1, 17);
  RankBoostConfig c;
  c.max_pairs_per_query = 5;
  auto filter = filter_for(s.queries);
  auto a = fit_rankboost(s.queries, s.scores, filter, c);
  auto b = fit_rankboost(s.queries, s.scores, filter, c);
  EXPECT_EQ(a.traces[0].num_pairs, 50u);
  EXPECT_EQ(a.weights, b.weights);
}

TEST(FitRankBoost, EmptyMetaSetIsError) {
  std::vector<ScoreTensor> s{tensor(Modality::kStructure, 0, 3, {})};
  EXPECT_THROW(fit_rankboost({}, s, FilterIndex{}, {}), ConfigError);
}

TEST(CombineBoosting, UsesRelationWeights) {
  std::mt19937_64 rng(8);
  auto in = random_scores(2, 5, rng);
  RelationWeights w;
  w.modalities = {kAllModalities.begin(), kAllModalities.end()};
  w.per_relation[0] = {1, 0, 0};
  w.fallback = {0, 0, 2};
  std::vector<Triple> q{{0, 0, 1}, {0, 3, 1}};
  auto out = combine_boosting(in, q, w);
  for (std::size_t e = 0; e < 5; ++e) {
    EXPECT_EQ(out.values(0, e), in[0].values(0, e));
    EXPECT_EQ(out.values(1, e), 2.0 * in[2].values(1, e));
  }
}

TEST(CombineBoosting, PositiveScalingKeepsOrder) {
  std::mt19937_64 rng(9);
  auto in = random_scores(1, 20, rng);
  std::vector<double> w{0.3, -0.2, 1.1}, w2{0.9, -0.6, 3.3};
  auto a = combine_weighted(in, w).values.data;
  auto b = combine_weighted(in, w2).values.data;
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j) EXPECT_EQ(a[i] < a[j], b[i] < b[j]);
}

MetaLearnerParams random_mlp(std::size_t hidden, std::mt19937_64& rng) {
  auto p = MetaLearnerParams::zeros(3, hidden);
  for (double* v : p.flat()) *v = std::normal_distribution<double>(0, 0.7)(rng);
  return p;
}

TEST(MetaLearner, ZeroNetworkGivesUniformWeights) {
  auto p = MetaLearnerParams::zeros(3, 4);
  std::vector<double> x{0.5, -1.0, 2.0};
  for (double w : metalearner_weights(p, x)) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);

  MetaLearner learner;
  learner.modalities = {kAllModalities.begin(), kAllModalities.end()};
  learner.standardizer = {{1.0, 0.0, -1.0}, {2.0, 1.0, 0.5}};
  learner.params = p;
  std::vector<ScoreTensor> in{tensor(Modality::kStructure, 1, 2, {3, 1}),
                              tensor(Modality::kVisual, 1, 2, {0, 2}),
                              tensor(Modality::kText, 1, 2, {-1, 0})};
  auto out = combine_metalearner(in, learner);
  EXPECT_NEAR(out.values(0, 0), (1.0 + 0.0 + 0.0) / 3.0, 1e-15);
  EXPECT_NEAR(out.values(0, 1), (0.0 + 2.0 + 2.0) / 3.0, 1e-15);
}

TEST(MetaLearner, SaturatedOutputSelectsStructure) {
  auto p = MetaLearnerParams::zeros(3, 4);
  p.b2 = {10.0, -10.0, -10.0};
  std::vector<double> x{0.7, -3.0, 5.0};
  auto w = metalearner_weights(p, x);
  EXPECT_NEAR(w[0], 1.0, 1e-8);
  EXPECT_NEAR(oracle::mlp_combined(p, x), 0.7, 1e-7);
}

TEST(MetaLearner, WeightsMatchScalarOracle) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_mlp(7, rng);
    auto x = testing::random_vector(3, rng);
    auto w = metalearner_weights(p, x);
    auto o = oracle::mlp_weights(p, x);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    for (std::size_t m = 0; m < 3; ++m) EXPECT_NEAR(w[m], o[m], 1e-10);
  }
}

TEST(MetaLearner, CombineMatchesScalarOracle) {
  std::mt19937_64 rng(11);
  auto in = random_scores(3, 6, rng);
  MetaLearner learner = init_metalearner(in, MetaLearnerConfig{.hidden = 5, .seed = 3});
  learner.params = random_mlp(5, rng);
  auto out = combine_metalearner(in, learner);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t e = 0; e < 6; ++e) {
      std::vector<double> x(3);
      for (std::size_t m = 0; m < 3; ++m)
        x[m] = (in[m].values(b, e) - learner.standardizer.mean[m]) /
               learner.standardizer.stddev[m];
      EXPECT_NEAR(out.values(b, e), oracle::mlp_combined(learner.params, x), 1e-10);
    }
}

TEST(MetaLearner, StandardizerUsesPopulationMoments) {
  std::vector<ScoreTensor> in{tensor(Modality::kStructure, 1, 4, {1, 2, 3, 4}),
                              tensor(Modality::kVisual, 1, 4, {5, 5, 5, 5})};
  auto s = Standardizer::fit(in);
  EXPECT_DOUBLE_EQ(s.mean[0], 2.5);
  EXPECT_DOUBLE_EQ(s.stddev[0], std::sqrt(1.25));
  EXPECT_DOUBLE_EQ(s.stddev[1], 1.0);
}

TEST(MetaLearner, QueryLossMatchesOracleAndFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_mlp(6, rng);
    auto inputs = testing::random_matrix(9, 3, rng);
    std::vector<std::uint8_t> mask(9, 1);
    mask[2] = mask[5] = 0;
    const EntityId gold = 4;
    auto grad = MetaLearnerParams::zeros(3, 6);
    const double loss = metalearner_query_loss(p, inputs, mask, gold, &grad);
    EXPECT_NEAR(loss, oracle::mlp_query_loss(p, inputs, mask, gold), 1e-12);
    auto params = p.flat();
    auto grads = grad.flat();
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double keep = *params[k], h = 1e-5;
      *params[k] = keep + h;
      const double plus = oracle::mlp_query_loss(p, inputs, mask, gold);
      *params[k] = keep - h;
      const double minus = oracle::mlp_query_loss(p, inputs, mask, gold);
      *params[k] = keep;
      EXPECT_LT(testing::rel_error(*grads[k], (plus - minus) / (2 * h)), 1e-4);
    }
  }
}

TEST(MetaLearner, HiddenSizeZeroIsConfigError) {
  auto s = synthetic(1, 10, 8, 1, 3);
  MetaLearnerConfig c;
  c.hidden = 0;
  EXPECT_THROW(fit_metalearner(s.queries, s.scores, filter_for(s.queries), c),
               ConfigError);
}

TEST(MetaLearner, LearnsToTrustInformativeModality) {
  auto s = synthetic(1, 120, 20, 3, 21);
  MetaLearnerConfig c;
  c.hidden = 16;
  c.epochs = 30;
  c.seed = 4;
  auto learner = fit_metalearner(s.queries, s.scores, filter_for(s.queries), c);
  EXPECT_TRUE(learner.params.all_finite());
  std::vector<double> mean(3, 0.0);
  std::size_t count = 0;
  for (std::size_t b = 0; b < s.queries.size(); ++b)
    for (std::size_t e = 0; e < 20; ++e) {
      std::vector<double> x(3);
      for (std::size_t m = 0; m < 3; ++m)
        x[m] = (s.scores[m].values(b, e) - learner.standardizer.mean[m]) /
               learner.standardizer.stddev[m];
      auto w = metalearner_weights(learner.params, x);
      for (std::size_t m = 0; m < 3; ++m) mean[m] += w[m];
      ++count;
    }
  EXPECT_GT(mean[1], mean[0]);
  EXPECT_GT(mean[1], mean[2]);
}

TEST(MetaLearner, FitIsDeterministic) {
  auto s = synthetic(2, 40, 10, 2, 5);
  MetaLearnerConfig c;
  c.hidden = 8;
  c.epochs = 5;
  auto filter = filter_for(s.queries);
  EXPECT_EQ(fit_metalearner(s.queries, s.scores, filter, c),
            fit_metalearner(s.queries, s.scores, filter, c));
}

}  // namespace
}  // namespace mose
