#include <gtest/gtest.h>

#include "mose/kernels.hpp"
#include "test_util.hpp"

namespace mose {
namespace {

using testing::random_matrix;

class KernelsTest : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override { kernels::set_num_threads(GetParam()); }
  void TearDown() override { kernels::set_num_threads(0); }
  std::mt19937_64 rng{GetParam() * 101 + 7};
};

TEST_P(KernelsTest, ScoreQueriesMatchesSerial) {
  auto q = random_matrix(37, 16, rng);
  auto e = random_matrix(53, 16, rng);
  Matrix a(37, 53), b(37, 53);
  kernels::serial::score_queries(q, e, a);
  kernels::parallel::score_queries(q, e, b);
  EXPECT_EQ(a, b);
  double naive = 0.0;
  for (std::size_t k = 0; k < 16; ++k) naive += q(3, k) * e(5, k);
  EXPECT_NEAR(a(3, 5), naive, 1e-12);
}

TEST_P(KernelsTest, CandidateGradMatchesSerial) {
  auto up = random_matrix(19, 41, rng);
  up(0, 0) = 0.0;
  auto q = random_matrix(19, 12, rng);
  auto a = random_matrix(41, 12, rng);
  Matrix b = a;
  kernels::serial::accumulate_candidate_grad(up, q, a);
  kernels::parallel::accumulate_candidate_grad(up, q, b);
  EXPECT_EQ(a, b);
}

TEST_P(KernelsTest, QueryGradMatchesSerial) {
  auto up = random_matrix(23, 31, rng);
  auto e = random_matrix(31, 10, rng);
  Matrix a(23, 10), b(23, 10);
  kernels::serial::query_grad(up, e, a);
  kernels::parallel::query_grad(up, e, b);
  EXPECT_EQ(a, b);
}

TEST_P(KernelsTest, ProjectionMatchesSerial) {
  auto f = random_matrix(29, 9, rng);
  auto w = random_matrix(14, 9, rng);
  Matrix a(29, 14), b(29, 14);
  kernels::serial::project(f, w, a);
  kernels::parallel::project(f, w, b);
  EXPECT_EQ(a, b);

  auto g = random_matrix(29, 14, rng);
  Matrix ga(14, 9), gb(14, 9);
  kernels::serial::accumulate_projection_grad(g, f, ga);
  kernels::parallel::accumulate_projection_grad(g, f, gb);
  EXPECT_EQ(ga, gb);
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelsTest, ::testing::Values(1, 2, 3, 8));

}  // namespace
}  // namespace mose
