#include "mose/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mose/decoder.hpp"
#include "mose/error.hpp"
#include "mose/evaluator.hpp"
#include "mose/kernels.hpp"

namespace mose {

void TrainConfig::validate() const {
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(n3_weight >= 0.0)) throw ConfigError("n3_weight must be >= 0");
  if (modalities.empty()) throw ConfigError("no modalities configured");
  if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
}

std::vector<double> softmax_with_temperature(std::span<const double> scores,
                                             double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  std::vector<double> p(scores.size());
  if (scores.empty()) return p;
  const double max = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp((scores[i] - max) / temperature);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

CeResult ce_loss(std::span<const double> scores, EntityId gold,
                 double temperature) {
  if (gold >= scores.size()) {
    throw IndexError("gold id " + std::to_string(gold) + " out of range");
  }
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  CeResult out;
  out.grad.resize(scores.size());
  const double max = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.grad[i] = std::exp((scores[i] - max) / temperature);
    sum += out.grad[i];
  }
  out.loss = std::log(sum) - (scores[gold] - max) / temperature;
  for (auto& g : out.grad) g /= sum * temperature;
  out.grad[gold] -= 1.0 / temperature;
  return out;
}

AdagradState::AdagradState(const std::vector<Matrix>& like) {
  accumulators.reserve(like.size());
  for (const auto& t : like) accumulators.emplace_back(t.rows, t.cols);
}

void AdagradState::step(std::vector<Matrix>& params,
                        const std::vector<Matrix>& grads,
                        double learning_rate) {
  if (params.size() != grads.size() || params.size() != accumulators.size()) {
    throw ShapeError("optimizer state does not mirror the parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].data;
    const auto& g = grads[i].data;
    auto& acc = accumulators[i].data;
    if (theta.size() != g.size() || theta.size() != acc.size()) {
      throw ShapeError("optimizer tensor shape mismatch");
    }
    for (std::size_t k = 0; k < theta.size(); ++k) {
      acc[k] += g[k] * g[k];
      theta[k] -= learning_rate * g[k] / std::sqrt(acc[k] + kEpsilon);
    }
  }
}

namespace {

// Queries processed per forward/backward chunk; bounds the B x |E| buffers.
constexpr std::size_t kChunk = 256;

double n3_term(std::span<const double> v, double scale, std::span<double> grad) {
  const std::size_t d = v.size() / 2;
  double sum = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double re = v[k], im = v[d + k];
    const double mod = std::sqrt(re * re + im * im);
    sum += mod * mod * mod;
    grad[k] += scale * 3.0 * mod * re;
    grad[d + k] += scale * 3.0 * mod * im;
  }
  return sum;
}

}  // namespace

BatchGradients compute_batch_gradients(const ModelParams& params,
                                       std::span<const Triple> batch,
                                       const TrainConfig& config) {
  BatchGradients out;
  out.grads = params.zeros_like();
  if (batch.empty()) return out;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (auto m : params.modalities()) {
    if (!config.loss_terms[index_of(m)]) continue;
    const double temperature = config.temperature_for(m);
    const Matrix embeddings = params.entity_embeddings(m);
    const Matrix& relations = params.relation_table(m);
    Matrix grad_embeddings(embeddings.rows, embeddings.cols);
    Matrix grad_relations(relations.rows, relations.cols);
    double loss = 0.0;

    for (std::size_t start = 0; start < batch.size(); start += kChunk) {
      const auto chunk =
          batch.subspan(start, std::min(kChunk, batch.size() - start));
      const Matrix queries = decoder::compose_queries(embeddings, relations, chunk);
      Matrix scores;
      kernels::score_queries(queries, embeddings, scores);

      // Scores become d loss / d scores in place.
      std::vector<double> row_loss(chunk.size());
      const auto rows = static_cast<std::ptrdiff_t>(chunk.size());
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t b = 0; b < rows; ++b) {
        const auto i = static_cast<std::size_t>(b);
        auto row = scores.row(i);
        auto ce = ce_loss(row, chunk[i].tail, temperature);
        row_loss[i] = ce.loss;
        for (std::size_t e = 0; e < row.size(); ++e) row[e] = ce.grad[e] * inv_batch;
      }
      for (double l : row_loss) loss += l;

      kernels::accumulate_candidate_grad(scores, queries, grad_embeddings);
      Matrix grad_queries;
      kernels::query_grad(scores, embeddings, grad_queries);
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        const auto& t = chunk[i];
        decoder::compose_query_backward(
            embeddings.row(t.head), relations.row(t.relation),
            grad_queries.row(i), grad_embeddings.row(t.head),
            grad_relations.row(t.relation));
      }
    }
    loss *= inv_batch;

    if (config.n3_weight > 0.0) {
      const double scale = config.n3_weight * inv_batch;
      double reg = 0.0;
      for (const auto& t : batch) {
        reg += n3_term(embeddings.row(t.head), scale, grad_embeddings.row(t.head));
        reg += n3_term(relations.row(t.relation), scale,
                       grad_relations.row(t.relation));
        reg += n3_term(embeddings.row(t.tail), scale, grad_embeddings.row(t.tail));
      }
      loss += scale * reg;
    }

    auto& grad_source = out.grads[params.entity_slot(m)];
    if (m == Modality::kStructure) {
      for (std::size_t k = 0; k < grad_source.size(); ++k) {
        grad_source.data[k] += grad_embeddings.data[k];
      }
    } else {
      kernels::accumulate_projection_grad(grad_embeddings,
                                          *params.features().get(m), grad_source);
    }
    auto& grad_rel = out.grads[params.relation_slot(m)];
    for (std::size_t k = 0; k < grad_rel.size(); ++k) {
      grad_rel.data[k] += grad_relations.data[k];
    }
    out.loss.per_modality[index_of(m)] = loss;
  }
  return out;
}

LossBreakdown batch_step(std::span<const Triple> batch, ModelParams& params,
                         AdagradState& optimizer, const TrainConfig& config,
                         std::size_t epoch, std::size_t batch_index) {
  auto step = compute_batch_gradients(params, batch, config);
  if (!std::isfinite(step.loss.total())) {
    std::ostringstream msg;
    msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index;
    throw NumericError(msg.str());
  }
  if (optimizer.accumulators.empty()) optimizer = AdagradState(params.tensors());
  optimizer.step(params.tensors(), step.grads, config.learning_rate);
  if (!params.all_finite()) {
    std::ostringstream msg;
    msg << "non-finite parameter after epoch " << epoch << ", batch "
        << batch_index;
    throw NumericError(msg.str());
  }
  return step.loss;
}

bool EarlyStopper::update(double metric) {
  if (!seen_ || metric > best_) {
    seen_ = true;
    best_ = metric;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

void write_epoch_log(std::ostream& out, const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["L_s"] = log.loss.structure();
  j["L_v"] = log.loss.visual();
  j["L_t"] = log.loss.text();
  j["valid_hits10"] = log.valid_hits10;
  j["wall_time"] = log.wall_time_s;
  out << j.dump() << '\n';
}

FitResult fit(const TripleStore& store, const FilterIndex& filter,
              ModelParams params, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  config.validate();
  if (store.valid.empty()) throw ConfigError("validation split is empty");
  if (store.train.empty()) throw ConfigError("training split is empty");

  FitResult result;
  AdagradState optimizer(params.tensors());
  EarlyStopper stopper(config.patience);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(store.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Triple> batch;
  const auto start = std::chrono::steady_clock::now();

  result.params = params;
  result.optimizer = optimizer;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown epoch_loss;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(store.train[order[i]]);
      const auto loss =
          batch_step(batch, params, optimizer, config, epoch, batch_index);
      const double weight = static_cast<double>(batch.size()) /
                            static_cast<double>(order.size());
      for (std::size_t m = 0; m < kNumModalities; ++m) {
        epoch_loss.per_modality[m] += weight * loss.per_modality[m];
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.loss = epoch_loss;
    log.valid_hits10 =
        evaluate(store.valid, params, filter, InferenceMode::average(), nullptr,
                 config.eval_batch_size)
            .overall.hits10;
    log.wall_time_s = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    result.log.push_back(log);
    result.epochs_run = epoch;
    if (on_epoch) on_epoch(log);

    if (stopper.update(log.valid_hits10)) {
      result.best_epoch = epoch;
      if (config.keep_best) {
        result.params = params;
        result.optimizer = optimizer;
      }
    }
    if (stopper.should_stop()) break;
  }
  if (!config.keep_best) {
    result.params = std::move(params);
    result.optimizer = std::move(optimizer);
  }
  std::ostringstream state;
  state << rng;
  result.rng_state = state.str();
  return result;
}

}  // namespace mose
