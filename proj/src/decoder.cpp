#include "mose/decoder.hpp"

#include <string>

#include "mose/error.hpp"
#include "mose/kernels.hpp"

namespace mose::decoder {

namespace {

void check_even(std::size_t n) {
  if (n % 2 != 0) throw ShapeError("complex vector must have even length");
}

}  // namespace

void compose_query(std::span<const double> head,
                   std::span<const double> relation, std::span<double> out) {
  if (head.size() != relation.size() || out.size() != head.size()) {
    throw ShapeError("compose_query dimension mismatch");
  }
  check_even(head.size());
  const std::size_t d = head.size() / 2;
  for (std::size_t k = 0; k < d; ++k) {
    const double hr = head[k], hi = head[d + k];
    const double rr = relation[k], ri = relation[d + k];
    out[k] = hr * rr - hi * ri;
    out[d + k] = hr * ri + hi * rr;
  }
}

void compose_query_backward(std::span<const double> head,
                            std::span<const double> relation,
                            std::span<const double> grad_query,
                            std::span<double> grad_head,
                            std::span<double> grad_relation) {
  const std::size_t d = head.size() / 2;
  for (std::size_t k = 0; k < d; ++k) {
    const double hr = head[k], hi = head[d + k];
    const double rr = relation[k], ri = relation[d + k];
    const double gr = grad_query[k], gi = grad_query[d + k];
    grad_head[k] += gr * rr + gi * ri;
    grad_head[d + k] += -gr * ri + gi * rr;
    grad_relation[k] += gr * hr + gi * hi;
    grad_relation[d + k] += -gr * hi + gi * hr;
  }
}

double score(std::span<const double> head, std::span<const double> relation,
             std::span<const double> tail) {
  if (head.size() != relation.size() || head.size() != tail.size()) {
    throw ShapeError("score dimension mismatch: " +
                     std::to_string(head.size()) + ", " +
                     std::to_string(relation.size()) + ", " +
                     std::to_string(tail.size()));
  }
  std::vector<double> query(head.size());
  compose_query(head, relation, query);
  double acc = 0.0;
  for (std::size_t k = 0; k < query.size(); ++k) acc += query[k] * tail[k];
  return acc;
}

Matrix compose_queries(const Matrix& embeddings, const Matrix& relations,
                       std::span<const Triple> queries) {
  Matrix out(queries.size(), embeddings.cols);
  for (std::size_t b = 0; b < queries.size(); ++b) {
    const auto& q = queries[b];
    if (q.head >= embeddings.rows) {
      throw IndexError("head id " + std::to_string(q.head) + " out of range");
    }
    if (q.relation >= relations.rows) {
      throw IndexError("relation id " + std::to_string(q.relation) +
                       " out of range");
    }
    compose_query(embeddings.row(q.head), relations.row(q.relation),
                  out.row(b));
  }
  return out;
}

ScoreTensor score_queries(const ModelParams& params, Modality m,
                          std::span<const Triple> queries,
                          const Matrix* embeddings) {
  Matrix owned;
  if (embeddings == nullptr) {
    owned = params.entity_embeddings(m);
    embeddings = &owned;
  }
  const Matrix q = compose_queries(*embeddings, params.relation_table(m), queries);
  ScoreTensor out{m, {}};
  kernels::score_queries(q, *embeddings, out.values);
  return out;
}

std::vector<double> score_all_tails(const ModelParams& params, Modality m,
                                    EntityId head, RelationId relation) {
  const Triple query{head, relation, 0};
  auto scores = score_queries(params, m, std::span(&query, 1));
  return std::move(scores.values.data);
}

ScoreGradients score_gradients(std::span<const double> head,
                               std::span<const double> relation,
                               const Matrix& tails,
                               std::span<const double> upstream) {
  if (tails.cols != head.size() || upstream.size() != tails.rows) {
    throw ShapeError("score_gradients shape mismatch");
  }
  Matrix query(1, head.size());
  compose_query(head, relation, query.row(0));
  Matrix up(1, upstream.size());
  std::copy(upstream.begin(), upstream.end(), up.data.begin());

  ScoreGradients grads;
  grads.tails = Matrix(tails.rows, tails.cols);
  kernels::accumulate_candidate_grad(up, query, grads.tails);
  Matrix grad_query;
  kernels::query_grad(up, tails, grad_query);
  grads.head.assign(head.size(), 0.0);
  grads.relation.assign(relation.size(), 0.0);
  compose_query_backward(head, relation, grad_query.row(0), grads.head,
                         grads.relation);
  return grads;
}

}  // namespace mose::decoder
