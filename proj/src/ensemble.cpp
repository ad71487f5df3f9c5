#include "mose/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mose/error.hpp"

namespace mose {

namespace {

void check_tensors(std::span<const ScoreTensor> scores) {
  if (scores.empty()) throw ShapeError("no score tensors to combine");
  for (const auto& s : scores) {
    if (!s.values.same_shape(scores[0].values)) {
      throw ShapeError("score tensors have different shapes");
    }
  }
}

}  // namespace

ScoreTensor combine_weighted(std::span<const ScoreTensor> scores,
                             std::span<const double> weights) {
  check_tensors(scores);
  if (weights.size() != scores.size()) {
    throw ShapeError("expected " + std::to_string(scores.size()) +
                     " weights, got " + std::to_string(weights.size()));
  }
  ScoreTensor out{scores[0].modality,
                  Matrix(scores[0].values.rows, scores[0].values.cols)};
  const std::size_t n = out.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t m = 0; m < scores.size(); ++m) {
      acc += weights[m] * scores[m].values.data[i];
    }
    out.values.data[i] = acc;
  }
  return out;
}

ScoreTensor combine_average(std::span<const ScoreTensor> scores) {
  const std::vector<double> uniform(
      scores.size(), 1.0 / static_cast<double>(std::max<std::size_t>(1, scores.size())));
  return combine_weighted(scores, uniform);
}

const std::vector<double>& RelationWeights::for_relation(RelationId r) const {
  auto it = per_relation.find(r);
  return it == per_relation.end() ? fallback : it->second;
}

ScoreTensor combine_boosting(std::span<const ScoreTensor> scores,
                             std::span<const Triple> queries,
                             const RelationWeights& weights) {
  check_tensors(scores);
  if (scores[0].values.rows != queries.size()) {
    throw ShapeError("score rows do not match the query count");
  }
  if (weights.modalities.size() != scores.size()) {
    throw ShapeError("relation weights cover a different modality set");
  }
  for (std::size_t m = 0; m < scores.size(); ++m) {
    if (scores[m].modality != weights.modalities[m]) {
      throw ShapeError("score tensor order differs from the weight order");
    }
  }
  ScoreTensor out{scores[0].modality,
                  Matrix(scores[0].values.rows, scores[0].values.cols)};
  const std::size_t cols = out.values.cols;
  for (std::size_t b = 0; b < queries.size(); ++b) {
    const auto& w = weights.for_relation(queries[b].relation);
    for (std::size_t e = 0; e < cols; ++e) {
      double acc = 0.0;
      for (std::size_t m = 0; m < scores.size(); ++m) {
        acc += w[m] * scores[m].values(b, e);
      }
      out.values(b, e) = acc;
    }
  }
  return out;
}

double rankboost_candidate_weight(std::span<const double> distribution,
                                  std::span<const std::int8_t> indicators,
                                  double epsilon) {
  double plus = 0.0, minus = 0.0;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    (indicators[i] > 0 ? plus : minus) += distribution[i];
  }
  return 0.5 * std::log((plus + epsilon) / (minus + epsilon));
}

RankBoostResult fit_rankboost(std::span<const Triple> queries,
                              std::span<const ScoreTensor> scores,
                              const FilterIndex& filter,
                              const RankBoostConfig& config) {
  if (queries.empty()) throw ConfigError("empty meta-set");
  check_tensors(scores);
  if (scores[0].values.rows != queries.size()) {
    throw ShapeError("score rows do not match the query count");
  }
  const std::size_t num_modalities = scores.size();
  const std::size_t num_entities = scores[0].values.cols;

  std::map<RelationId, std::vector<std::size_t>> by_relation;
  for (std::size_t b = 0; b < queries.size(); ++b) {
    by_relation[queries[b].relation].push_back(b);
  }

  RankBoostResult result;
  for (const auto& s : scores) result.weights.modalities.push_back(s.modality);
  std::mt19937_64 rng(config.seed);
  std::vector<EntityId> candidates;
  std::vector<RelationId> empty_relations;
  std::vector<double> fallback(num_modalities, 0.0);
  double total_pairs = 0.0;

  for (const auto& [relation, members] : by_relation) {
    // Indicators stored modality-major: indicators[m][pair].
    std::vector<std::vector<std::int8_t>> indicators(num_modalities);
    for (std::size_t b : members) {
      const auto& q = queries[b];
      if (q.tail >= num_entities) throw IndexError("gold tail out of range");
      candidates.clear();
      for (EntityId e = 0; e < num_entities; ++e) {
        if (e != q.tail && !filter.contains(q.head, q.relation, e)) {
          candidates.push_back(e);
        }
      }
      if (config.max_pairs_per_query > 0 &&
          candidates.size() > config.max_pairs_per_query) {
        for (std::size_t i = 0; i < config.max_pairs_per_query; ++i) {
          std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
          std::swap(candidates[i], candidates[pick(rng)]);
        }
        candidates.resize(config.max_pairs_per_query);
        std::sort(candidates.begin(), candidates.end());
      }
      for (std::size_t m = 0; m < num_modalities; ++m) {
        const double gold = scores[m].values(b, q.tail);
        for (EntityId e : candidates) {
          indicators[m].push_back(scores[m].values(b, e) < gold ? 1 : -1);
        }
      }
    }

    const std::size_t num_pairs = indicators[0].size();
    RelationTrace trace;
    trace.relation = relation;
    trace.num_pairs = num_pairs;
    if (num_pairs == 0) {
      empty_relations.push_back(relation);
      result.traces.push_back(std::move(trace));
      continue;
    }

    std::vector<double> distribution(num_pairs, 1.0 / static_cast<double>(num_pairs));
    std::vector<bool> chosen(num_modalities, false);
    std::vector<double> weights(num_modalities, 0.0);
    for (std::size_t round = 0; round < num_modalities; ++round) {
      BoostingRound info;
      info.candidate_weights.assign(num_modalities,
                                    std::numeric_limits<double>::quiet_NaN());
      std::size_t best = num_modalities;
      for (std::size_t m = 0; m < num_modalities; ++m) {
        if (chosen[m]) continue;
        const double w =
            rankboost_candidate_weight(distribution, indicators[m], config.epsilon);
        info.candidate_weights[m] = w;
        if (best == num_modalities || w > info.candidate_weights[best]) best = m;
      }
      const double w = info.candidate_weights[best];
      double z = 0.0;
      for (std::size_t i = 0; i < num_pairs; ++i) {
        distribution[i] *= std::exp(-w * indicators[best][i]);
        z += distribution[i];
      }
      for (auto& d : distribution) d /= z;
      chosen[best] = true;
      weights[best] += w;

      info.chosen = scores[best].modality;
      info.weight = w;
      info.distribution_sum = std::accumulate(distribution.begin(), distribution.end(), 0.0);
      info.distribution_min = *std::min_element(distribution.begin(), distribution.end());
      trace.rounds.push_back(std::move(info));
    }

    const double n = static_cast<double>(num_pairs);
    for (std::size_t m = 0; m < num_modalities; ++m) fallback[m] += n * weights[m];
    total_pairs += n;
    result.weights.per_relation[relation] = std::move(weights);
    result.traces.push_back(std::move(trace));
  }

  if (total_pairs > 0.0) {
    for (auto& w : fallback) w /= total_pairs;
  } else {
    std::fill(fallback.begin(), fallback.end(),
              1.0 / static_cast<double>(num_modalities));
  }
  result.weights.fallback = fallback;
  for (RelationId r : empty_relations) result.weights.per_relation[r] = fallback;
  return result;
}

// ---------------------------------------------------------------------------
// Meta-learner

MetaLearnerParams MetaLearnerParams::zeros(std::size_t modalities,
                                           std::size_t hidden) {
  MetaLearnerParams p;
  p.hidden = hidden;
  p.w1 = Matrix(modalities, hidden);
  p.b1.assign(hidden, 0.0);
  p.w2 = Matrix(hidden, modalities);
  p.b2.assign(modalities, 0.0);
  return p;
}

std::vector<double*> MetaLearnerParams::flat() {
  std::vector<double*> out;
  for (auto& v : w1.data) out.push_back(&v);
  for (auto& v : b1) out.push_back(&v);
  for (auto& v : w2.data) out.push_back(&v);
  for (auto& v : b2) out.push_back(&v);
  return out;
}

bool MetaLearnerParams::all_finite() const {
  auto finite = [](const auto& xs) {
    return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
  };
  return finite(w1.data) && finite(b1) && finite(w2.data) && finite(b2);
}

Standardizer Standardizer::fit(std::span<const ScoreTensor> scores) {
  Standardizer s;
  for (const auto& t : scores) {
    const auto& v = t.values.data;
    const double n = static_cast<double>(std::max<std::size_t>(1, v.size()));
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    double sd = std::sqrt(var / n);
    if (!(sd > 1e-12)) sd = 1.0;
    s.mean.push_back(mean);
    s.stddev.push_back(sd);
  }
  return s;
}

namespace {

struct Forward {
  std::vector<double> pre;     // H, hidden pre-activation
  std::vector<double> hidden;  // H
  std::vector<double> weights; // M, softmax output
  double combined = 0.0;
};

void forward(const MetaLearnerParams& p, std::span<const double> x, Forward& f) {
  const std::size_t m_count = p.w1.rows;
  const std::size_t h_count = p.hidden;
  f.pre.assign(h_count, 0.0);
  f.hidden.assign(h_count, 0.0);
  for (std::size_t k = 0; k < h_count; ++k) {
    double z = p.b1[k];
    for (std::size_t m = 0; m < m_count; ++m) z += x[m] * p.w1(m, k);
    f.pre[k] = z;
    f.hidden[k] = z > 0.0 ? z : 0.0;
  }
  f.weights.assign(m_count, 0.0);
  double max = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m_count; ++j) {
    double o = p.b2[j];
    for (std::size_t k = 0; k < h_count; ++k) o += f.hidden[k] * p.w2(k, j);
    f.weights[j] = o;
    max = std::max(max, o);
  }
  double sum = 0.0;
  for (auto& w : f.weights) {
    w = std::exp(w - max);
    sum += w;
  }
  f.combined = 0.0;
  for (std::size_t j = 0; j < m_count; ++j) {
    f.weights[j] /= sum;
    f.combined += f.weights[j] * x[j];
  }
}

void backward(const MetaLearnerParams& p, std::span<const double> x,
              const Forward& f, double upstream, MetaLearnerParams& grad) {
  const std::size_t m_count = p.w1.rows;
  const std::size_t h_count = p.hidden;
  std::vector<double> grad_out(m_count);
  for (std::size_t j = 0; j < m_count; ++j) {
    grad_out[j] = upstream * f.weights[j] * (x[j] - f.combined);
    grad.b2[j] += grad_out[j];
  }
  for (std::size_t k = 0; k < h_count; ++k) {
    double grad_hidden = 0.0;
    for (std::size_t j = 0; j < m_count; ++j) {
      grad.w2(k, j) += f.hidden[k] * grad_out[j];
      grad_hidden += p.w2(k, j) * grad_out[j];
    }
    if (f.pre[k] <= 0.0) continue;
    grad.b1[k] += grad_hidden;
    for (std::size_t m = 0; m < m_count; ++m) grad.w1(m, k) += x[m] * grad_hidden;
  }
}

void check_learner_inputs(std::span<const ScoreTensor> scores,
                          const std::vector<Modality>& modalities) {
  check_tensors(scores);
  if (scores.size() != modalities.size()) {
    throw ShapeError("meta-learner expects " + std::to_string(modalities.size()) +
                     " score tensors, got " + std::to_string(scores.size()));
  }
  for (std::size_t m = 0; m < scores.size(); ++m) {
    if (scores[m].modality != modalities[m]) {
      throw ShapeError("score tensor order differs from the meta-learner's");
    }
  }
}

void standardized_inputs(std::span<const ScoreTensor> scores,
                         const Standardizer& s, std::size_t b, Matrix& out) {
  const std::size_t n = scores[0].values.cols;
  if (out.rows != n || out.cols != scores.size()) out = Matrix(n, scores.size());
  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t m = 0; m < scores.size(); ++m) {
      out(e, m) = (scores[m].values(b, e) - s.mean[m]) / s.stddev[m];
    }
  }
}

}  // namespace

std::vector<double> metalearner_weights(const MetaLearnerParams& params,
                                        std::span<const double> x) {
  if (x.size() != params.num_modalities()) {
    throw ShapeError("meta-learner input has wrong width");
  }
  Forward f;
  forward(params, x, f);
  return f.weights;
}

double metalearner_query_loss(const MetaLearnerParams& params,
                              const Matrix& inputs,
                              std::span<const std::uint8_t> mask, EntityId gold,
                              MetaLearnerParams* grad, double scale) {
  if (inputs.cols != params.num_modalities()) {
    throw ShapeError("meta-learner input has wrong width");
  }
  if (gold >= inputs.rows) throw IndexError("gold tail out of range");
  const std::size_t n = inputs.rows;
  std::vector<Forward> cache(n);
  std::vector<double> combined(n, 0.0);
  double max = -std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < n; ++e) {
    if (!mask.empty() && !mask[e] && e != gold) continue;
    forward(params, inputs.row(e), cache[e]);
    combined[e] = cache[e].combined;
    max = std::max(max, combined[e]);
  }
  double sum = 0.0;
  std::vector<double> prob(n, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    if (!mask.empty() && !mask[e] && e != gold) continue;
    prob[e] = std::exp(combined[e] - max);
    sum += prob[e];
  }
  const double loss = std::log(sum) - (combined[gold] - max);
  if (grad != nullptr) {
    for (std::size_t e = 0; e < n; ++e) {
      if (!mask.empty() && !mask[e] && e != gold) continue;
      const double g = (prob[e] / sum - (e == gold ? 1.0 : 0.0)) * scale;
      backward(params, inputs.row(e), cache[e], g, *grad);
    }
  }
  return loss;
}

MetaLearner init_metalearner(std::span<const ScoreTensor> scores,
                             const MetaLearnerConfig& config) {
  if (config.hidden < 1) throw ConfigError("meta-learner hidden size must be >= 1");
  check_tensors(scores);
  MetaLearner learner;
  for (const auto& s : scores) learner.modalities.push_back(s.modality);
  learner.standardizer = Standardizer::fit(scores);
  learner.params = MetaLearnerParams::zeros(scores.size(), config.hidden);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : learner.params.w1.data) v = normal(rng) * config.init_scale;
  for (auto& v : learner.params.w2.data) v = normal(rng) * config.init_scale;
  return learner;
}

MetaLearner fit_metalearner(std::span<const Triple> queries,
                            std::span<const ScoreTensor> scores,
                            const FilterIndex& filter,
                            const MetaLearnerConfig& config,
                            MetaLearnerFitLog* log) {
  if (config.hidden < 1) throw ConfigError("meta-learner hidden size must be >= 1");
  if (queries.empty()) throw ConfigError("empty meta-set");
  if (config.batch_size < 1) throw ConfigError("meta-learner batch size must be >= 1");
  MetaLearner learner = init_metalearner(scores, config);
  check_learner_inputs(scores, learner.modalities);
  if (scores[0].values.rows != queries.size()) {
    throw ShapeError("score rows do not match the query count");
  }
  const std::size_t n = scores[0].values.cols;

  // Other known-true tails are masked out of each query's softmax.
  std::vector<std::vector<std::uint8_t>> masks(queries.size());
  for (std::size_t b = 0; b < queries.size(); ++b) {
    masks[b].assign(n, 1);
    for (EntityId e : filter.tails(queries[b].head, queries[b].relation)) {
      if (e < n && e != queries[b].tail) masks[b][e] = 0;
    }
  }

  auto& params = learner.params;
  const auto flat_params = params.flat();
  std::vector<double> accumulators(flat_params.size(), 0.0);
  std::mt19937_64 rng(config.seed ^ 0x5bd1e995ULL);
  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Matrix inputs;

  auto meta_loss = [&](const MetaLearnerParams& p) {
    double total = 0.0;
    for (std::size_t b = 0; b < queries.size(); ++b) {
      standardized_inputs(scores, learner.standardizer, b, inputs);
      total += metalearner_query_loss(p, inputs, masks[b], queries[b].tail);
    }
    return total / static_cast<double>(queries.size());
  };

  MetaLearnerParams best = params;
  double best_loss = meta_loss(params);
  std::size_t best_epoch = 0;
  int bad_epochs = 0;
  if (log != nullptr) log->epoch_loss.clear();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      auto grad = MetaLearnerParams::zeros(params.num_modalities(), params.hidden);
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t b = order[i];
        standardized_inputs(scores, learner.standardizer, b, inputs);
        metalearner_query_loss(params, inputs, masks[b], queries[b].tail, &grad, scale);
      }
      const auto flat_grad = grad.flat();
      for (std::size_t k = 0; k < flat_params.size(); ++k) {
        const double g = *flat_grad[k];
        accumulators[k] += g * g;
        *flat_params[k] -= config.learning_rate * g / std::sqrt(accumulators[k] + 1e-10);
      }
      if (!params.all_finite()) {
        throw NumericError("meta-learner parameters became non-finite at epoch " +
                           std::to_string(epoch));
      }
    }
    const double loss = meta_loss(params);
    if (log != nullptr) log->epoch_loss.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best = params;
      best_epoch = epoch;
      bad_epochs = 0;
    } else if (config.patience >= 0 && ++bad_epochs > config.patience) {
      break;
    }
  }
  learner.params = std::move(best);
  if (log != nullptr) log->best_epoch = best_epoch;
  return learner;
}

ScoreTensor combine_metalearner(std::span<const ScoreTensor> scores,
                                const MetaLearner& learner) {
  check_learner_inputs(scores, learner.modalities);
  const auto& values0 = scores[0].values;
  ScoreTensor out{scores[0].modality, Matrix(values0.rows, values0.cols)};
  const auto rows = static_cast<std::ptrdiff_t>(values0.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < rows; ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    std::vector<double> x(scores.size());
    Forward f;
    for (std::size_t e = 0; e < values0.cols; ++e) {
      for (std::size_t m = 0; m < scores.size(); ++m) {
        x[m] = (scores[m].values(b, e) - learner.standardizer.mean[m]) /
               learner.standardizer.stddev[m];
      }
      forward(learner.params, x, f);
      out.values(b, e) = f.combined;
    }
  }
  return out;
}

}  // namespace mose
