#pragma once

// Dense inner loops of scoring, back-propagation and feature projection.
//
// Every kernel has a serial reference and an OpenMP version. Both walk the
// reduction index in the same order for each output element, so they agree
// bit-for-bit for any thread count; the parallel split is only over
// independent output rows.

#include "mose/matrix.hpp"

namespace mose::kernels {

namespace serial {

/// scores[b][e] = dot(queries[b], candidates[e]).
void score_queries(const Matrix& queries, const Matrix& candidates,
                   Matrix& scores);
/// grad_candidates[e] += sum_b upstream[b][e] * queries[b].
void accumulate_candidate_grad(const Matrix& upstream, const Matrix& queries,
                               Matrix& grad_candidates);
/// grad_queries[b] = sum_e upstream[b][e] * candidates[e].
void query_grad(const Matrix& upstream, const Matrix& candidates,
                Matrix& grad_queries);
/// embeddings[e][j] = dot(projection[j], features[e]).
void project(const Matrix& features, const Matrix& projection,
             Matrix& embeddings);
/// grad_projection[j][c] += sum_e grad_embeddings[e][j] * features[e][c].
void accumulate_projection_grad(const Matrix& grad_embeddings,
                                const Matrix& features,
                                Matrix& grad_projection);

}  // namespace serial

namespace parallel {

void score_queries(const Matrix& queries, const Matrix& candidates,
                   Matrix& scores);
void accumulate_candidate_grad(const Matrix& upstream, const Matrix& queries,
                               Matrix& grad_candidates);
void query_grad(const Matrix& upstream, const Matrix& candidates,
                Matrix& grad_queries);
void project(const Matrix& features, const Matrix& projection,
             Matrix& embeddings);
void accumulate_projection_grad(const Matrix& grad_embeddings,
                                const Matrix& features,
                                Matrix& grad_projection);

}  // namespace parallel

using parallel::accumulate_candidate_grad;
using parallel::accumulate_projection_grad;
using parallel::project;
using parallel::query_grad;
using parallel::score_queries;

/// Caps the worker count used by the parallel kernels (0 keeps the OpenMP
/// default).
void set_num_threads(int n);
int num_threads();

}  // namespace mose::kernels
