#pragma once

// ComplEx decoder: score(h, r, t) = Re(sum_k h_k r_k conj(t_k)).
//
// With the split layout [re_0..re_{d-1}, im_0..im_{d-1}] the score is the real
// dot product of the query q = h * r (complex product) with t, which is what
// lets 1-vs-all scoring run as a matrix product.

#include <span>
#include <vector>

#include "mose/kg.hpp"
#include "mose/matrix.hpp"
#include "mose/params.hpp"

namespace mose {

/// B x |E| scores for one modality.
struct ScoreTensor {
  Modality modality = Modality::kStructure;
  Matrix values;
};

namespace decoder {

/// out = h * r (complex, split layout).
void compose_query(std::span<const double> head,
                   std::span<const double> relation, std::span<double> out);

/// Back-propagates a gradient on q = h * r into h and r (accumulating).
void compose_query_backward(std::span<const double> head,
                            std::span<const double> relation,
                            std::span<const double> grad_query,
                            std::span<double> grad_head,
                            std::span<double> grad_relation);

double score(std::span<const double> head, std::span<const double> relation,
             std::span<const double> tail);

/// Scores of every entity as tail of (h, r) in modality m.
std::vector<double> score_all_tails(const ModelParams& params, Modality m,
                                    EntityId head, RelationId relation);

/// Batched 1-vs-all scores for (head, relation) of each query. When
/// `embeddings` is given it must be params.entity_embeddings(m).
ScoreTensor score_queries(const ModelParams& params, Modality m,
                          std::span<const Triple> queries,
                          const Matrix* embeddings = nullptr);

/// Query matrix (B x 2d) of h * r for each triple.
Matrix compose_queries(const Matrix& embeddings, const Matrix& relations,
                       std::span<const Triple> queries);

struct ScoreGradients {
  std::vector<double> head;
  std::vector<double> relation;
  Matrix tails;  // one row per candidate
};

/// Gradients of sum_e upstream[e] * score(h, r, tails[e]).
ScoreGradients score_gradients(std::span<const double> head,
                               std::span<const double> relation,
                               const Matrix& tails,
                               std::span<const double> upstream);

}  // namespace decoder
}  // namespace mose
