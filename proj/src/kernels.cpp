#include "mose/kernels.hpp"

#include <omp.h>

#include <cstddef>
#include <string>

#include "mose/error.hpp"

namespace mose::kernels {

namespace {

void check_score_shapes(const Matrix& queries, const Matrix& candidates,
                        Matrix& scores) {
  if (queries.cols != candidates.cols) {
    throw ShapeError("query width " + std::to_string(queries.cols) +
                     " != candidate width " + std::to_string(candidates.cols));
  }
  if (scores.rows != queries.rows || scores.cols != candidates.rows) {
    scores = Matrix(queries.rows, candidates.rows);
  }
}

void check_candidate_grad_shapes(const Matrix& upstream, const Matrix& queries,
                                 const Matrix& grad_candidates) {
  if (upstream.rows != queries.rows || upstream.cols != grad_candidates.rows ||
      queries.cols != grad_candidates.cols) {
    throw ShapeError("candidate gradient shape mismatch");
  }
}

void check_query_grad_shapes(const Matrix& upstream, const Matrix& candidates,
                             Matrix& grad_queries) {
  if (upstream.cols != candidates.rows) {
    throw ShapeError("query gradient shape mismatch");
  }
  if (grad_queries.rows != upstream.rows ||
      grad_queries.cols != candidates.cols) {
    grad_queries = Matrix(upstream.rows, candidates.cols);
  }
}

void check_project_shapes(const Matrix& features, const Matrix& projection,
                          Matrix& embeddings) {
  if (features.cols != projection.cols) {
    throw ShapeError("projection expects " + std::to_string(projection.cols) +
                     " feature columns, got " + std::to_string(features.cols));
  }
  if (embeddings.rows != features.rows || embeddings.cols != projection.rows) {
    embeddings = Matrix(features.rows, projection.rows);
  }
}

void check_projection_grad_shapes(const Matrix& grad_embeddings,
                                  const Matrix& features,
                                  const Matrix& grad_projection) {
  if (grad_embeddings.rows != features.rows ||
      grad_projection.rows != grad_embeddings.cols ||
      grad_projection.cols != features.cols) {
    throw ShapeError("projection gradient shape mismatch");
  }
}

// Per-output-element bodies shared by both variants.

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

inline void candidate_grad_row(const Matrix& upstream, const Matrix& queries,
                               std::size_t e, double* out) {
  const std::size_t width = queries.cols;
  for (std::size_t b = 0; b < upstream.rows; ++b) {
    const double g = upstream.data[b * upstream.cols + e];
    if (g == 0.0) continue;
    const double* q = queries.data.data() + b * width;
    for (std::size_t k = 0; k < width; ++k) out[k] += g * q[k];
  }
}

inline void query_grad_row(const Matrix& upstream, const Matrix& candidates,
                           std::size_t b, double* out) {
  const std::size_t width = candidates.cols;
  for (std::size_t k = 0; k < width; ++k) out[k] = 0.0;
  const double* g = upstream.data.data() + b * upstream.cols;
  for (std::size_t e = 0; e < candidates.rows; ++e) {
    if (g[e] == 0.0) continue;
    const double* c = candidates.data.data() + e * width;
    for (std::size_t k = 0; k < width; ++k) out[k] += g[e] * c[k];
  }
}

inline void projection_grad_row(const Matrix& grad_embeddings,
                                const Matrix& features, std::size_t j,
                                double* out) {
  const std::size_t width = features.cols;
  for (std::size_t e = 0; e < features.rows; ++e) {
    const double g = grad_embeddings.data[e * grad_embeddings.cols + j];
    if (g == 0.0) continue;
    const double* f = features.data.data() + e * width;
    for (std::size_t c = 0; c < width; ++c) out[c] += g * f[c];
  }
}

}  // namespace

namespace serial {

void score_queries(const Matrix& queries, const Matrix& candidates,
                   Matrix& scores) {
  check_score_shapes(queries, candidates, scores);
  const std::size_t width = queries.cols;
  for (std::size_t b = 0; b < queries.rows; ++b) {
    const double* q = queries.data.data() + b * width;
    for (std::size_t e = 0; e < candidates.rows; ++e) {
      scores(b, e) = dot(q, candidates.data.data() + e * width, width);
    }
  }
}

void accumulate_candidate_grad(const Matrix& upstream, const Matrix& queries,
                               Matrix& grad_candidates) {
  check_candidate_grad_shapes(upstream, queries, grad_candidates);
  for (std::size_t e = 0; e < grad_candidates.rows; ++e) {
    candidate_grad_row(upstream, queries, e, grad_candidates.row(e).data());
  }
}

void query_grad(const Matrix& upstream, const Matrix& candidates,
                Matrix& grad_queries) {
  check_query_grad_shapes(upstream, candidates, grad_queries);
  for (std::size_t b = 0; b < upstream.rows; ++b) {
    query_grad_row(upstream, candidates, b, grad_queries.row(b).data());
  }
}

void project(const Matrix& features, const Matrix& projection,
             Matrix& embeddings) {
  check_project_shapes(features, projection, embeddings);
  for (std::size_t e = 0; e < features.rows; ++e) {
    const double* f = features.data.data() + e * features.cols;
    for (std::size_t j = 0; j < projection.rows; ++j) {
      embeddings(e, j) =
          dot(projection.data.data() + j * projection.cols, f, features.cols);
    }
  }
}

void accumulate_projection_grad(const Matrix& grad_embeddings,
                                const Matrix& features,
                                Matrix& grad_projection) {
  check_projection_grad_shapes(grad_embeddings, features, grad_projection);
  for (std::size_t j = 0; j < grad_projection.rows; ++j) {
    projection_grad_row(grad_embeddings, features, j,
                        grad_projection.row(j).data());
  }
}

}  // namespace serial

namespace parallel {

void score_queries(const Matrix& queries, const Matrix& candidates,
                   Matrix& scores) {
  check_score_shapes(queries, candidates, scores);
  const std::size_t width = queries.cols;
  const auto total = static_cast<std::ptrdiff_t>(queries.rows * candidates.rows);
  const std::size_t n = candidates.rows;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < total; ++i) {
    const std::size_t b = static_cast<std::size_t>(i) / n;
    const std::size_t e = static_cast<std::size_t>(i) % n;
    scores.data[static_cast<std::size_t>(i)] =
        dot(queries.data.data() + b * width,
            candidates.data.data() + e * width, width);
  }
}

void accumulate_candidate_grad(const Matrix& upstream, const Matrix& queries,
                               Matrix& grad_candidates) {
  check_candidate_grad_shapes(upstream, queries, grad_candidates);
  const auto rows = static_cast<std::ptrdiff_t>(grad_candidates.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t e = 0; e < rows; ++e) {
    const auto row = static_cast<std::size_t>(e);
    candidate_grad_row(upstream, queries, row,
                       grad_candidates.data.data() + row * grad_candidates.cols);
  }
}

void query_grad(const Matrix& upstream, const Matrix& candidates,
                Matrix& grad_queries) {
  check_query_grad_shapes(upstream, candidates, grad_queries);
  const auto rows = static_cast<std::ptrdiff_t>(upstream.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    const auto row = static_cast<std::size_t>(b);
    query_grad_row(upstream, candidates, row,
                   grad_queries.data.data() + row * grad_queries.cols);
  }
}

void project(const Matrix& features, const Matrix& projection,
             Matrix& embeddings) {
  check_project_shapes(features, projection, embeddings);
  const auto rows = static_cast<std::ptrdiff_t>(features.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto e = static_cast<std::size_t>(i);
    const double* f = features.data.data() + e * features.cols;
    for (std::size_t j = 0; j < projection.rows; ++j) {
      embeddings.data[e * embeddings.cols + j] =
          dot(projection.data.data() + j * projection.cols, f, features.cols);
    }
  }
}

void accumulate_projection_grad(const Matrix& grad_embeddings,
                                const Matrix& features,
                                Matrix& grad_projection) {
  check_projection_grad_shapes(grad_embeddings, features, grad_projection);
  const auto rows = static_cast<std::ptrdiff_t>(grad_projection.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < rows; ++j) {
    const auto row = static_cast<std::size_t>(j);
    projection_grad_row(grad_embeddings, features, row,
                        grad_projection.data.data() + row * grad_projection.cols);
  }
}

}  // namespace parallel

void set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

}  // namespace mose::kernels
