// Serial reference vs OpenMP kernels on training-sized shapes.

#include <benchmark/benchmark.h>

#include <random>

#include "mose/kernels.hpp"

namespace {

mose::Matrix random_matrix(std::size_t rows, std::size_t cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  mose::Matrix m(rows, cols);
  for (auto& v : m.data) v = normal(rng);
  return m;
}

// Args: batch, entities, width.
template <bool kParallel>
void BM_ScoreQueries(benchmark::State& state) {
  const auto q = random_matrix(state.range(0), state.range(2), 1);
  const auto e = random_matrix(state.range(1), state.range(2), 2);
  mose::Matrix s;
  for (auto _ : state) {
    if constexpr (kParallel) mose::kernels::parallel::score_queries(q, e, s);
    else mose::kernels::serial::score_queries(q, e, s);
    benchmark::DoNotOptimize(s.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

template <bool kParallel>
void BM_CandidateGrad(benchmark::State& state) {
  const auto g = random_matrix(state.range(0), state.range(1), 3);
  const auto q = random_matrix(state.range(0), state.range(2), 4);
  mose::Matrix out(state.range(1), state.range(2));
  for (auto _ : state) {
    if constexpr (kParallel) mose::kernels::parallel::accumulate_candidate_grad(g, q, out);
    else mose::kernels::serial::accumulate_candidate_grad(g, q, out);
    benchmark::DoNotOptimize(out.data.data());
  }
}

template <bool kParallel>
void BM_Project(benchmark::State& state) {
  const auto f = random_matrix(state.range(1), 768, 5);
  const auto w = random_matrix(state.range(2), 768, 6);
  mose::Matrix out;
  for (auto _ : state) {
    if constexpr (kParallel) mose::kernels::parallel::project(f, w, out);
    else mose::kernels::serial::project(f, w, out);
    benchmark::DoNotOptimize(out.data.data());
  }
}

}  // namespace

BENCHMARK(BM_ScoreQueries<false>)->Args({256, 4096, 400});
BENCHMARK(BM_ScoreQueries<true>)->Args({256, 4096, 400});
BENCHMARK(BM_CandidateGrad<false>)->Args({256, 4096, 400});
BENCHMARK(BM_CandidateGrad<true>)->Args({256, 4096, 400});
BENCHMARK(BM_Project<false>)->Args({0, 4096, 400});
BENCHMARK(BM_Project<true>)->Args({0, 4096, 400});

BENCHMARK_MAIN();
