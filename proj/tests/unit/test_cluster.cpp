// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <numeric>

#include "gtae/cluster.hpp"

using namespace gtae;

namespace {

Matrix planted_toy() {
  const double v[6][6] = {{7, 7, 6, 6, 5, 5},     {7, 7, 6, 6, 5, 5},     {6, 6, 20, 20, 19, 19},
                          {6, 6, 20, 20, 19, 19}, {5, 5, 19, 19, 20, 20}, {5, 5, 19, 19, 20, 20}};
  Matrix t(6, 6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) t(i, j) = v[i][j];
  return t;
}

const ClusterAssignment kThreeBlocks(6, {{0, 1}, {2, 3}, {4, 5}});

Matrix random_symmetric(std::size_t n, Rng& rng) {
  Matrix t(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) t(i, j) = t(j, i) = rng.uniform(-1, 1);
  return t;
}

bool same_cluster(const ClusterAssignment& a, std::size_t u, std::size_t v) {
  const auto l = a.labels();
  return l[u] == l[v];
}

/// Every partition of n tasks into exactly k clusters.
std::vector<ClusterAssignment> all_partitions(std::size_t n, std::size_t k) {
  std::vector<ClusterAssignment> out;
  std::vector<std::size_t> rgs(n, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t used) {
    if (pos == n) {
      if (used == k) out.push_back(ClusterAssignment::from_labels(rgs));
      return;
    }
    for (std::size_t l = 0; l <= used && l < k; ++l) {
      rgs[pos] = l;
      rec(pos + 1, std::max(used, l + 1));
    }
  };
  rec(0, 0);
  return out;
}

}  // namespace

TEST(Assignment, CanonicalAndValidated) {
  const ClusterAssignment a(4, {{3, 1}, {2, 0}});
  EXPECT_EQ(a.clusters()[0], (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(a, ClusterAssignment::from_labels({5, 9, 5, 9}));
  EXPECT_THROW(ClusterAssignment(3, {{0, 1}}), InvalidArgument);
  EXPECT_THROW(ClusterAssignment(3, {{0, 1}, {1, 2}}), InvalidArgument);
  EXPECT_THROW(ClusterAssignment(3, {{0, 1, 2}, {}}), InvalidArgument);
  EXPECT_THROW(ClusterAssignment(2, {{0, 2}}), InvalidArgument);
}

TEST(Density, ToyValues) {
  const Matrix t = planted_toy();
  EXPECT_DOUBLE_EQ(avg_density(t, kThreeBlocks), 94.0 / 3.0);
  EXPECT_DOUBLE_EQ(avg_density(t, ClusterAssignment(6, {{0, 1}, {2, 3, 4, 5}})), 46.0);
  double total = 0.0;
  for (double v : t.data()) total += v;
  EXPECT_DOUBLE_EQ(avg_density(t, ClusterAssignment(6, {{0, 1, 2, 3, 4, 5}})), total / 6.0);
}

TEST(Density, EqualsInnerProductWithLift) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.below(6);
    const Matrix t = random_symmetric(n, rng);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(3);
    const auto a = ClusterAssignment::from_labels(labels);
    EXPECT_NEAR(inner(t, lift_assignment(a)) / static_cast<double>(a.k()), avg_density(t, a), 1e-12);
  }
}

TEST(Density, PermutationInvariant) {
  Rng rng(5);
  const std::size_t n = 7;
  const Matrix t = random_symmetric(n, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Matrix tp(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) tp(perm[i], perm[j]) = t(i, j);
  const std::vector<std::size_t> labels = {0, 1, 0, 2, 1, 2, 0};
  std::vector<std::size_t> permuted(n);
  for (std::size_t i = 0; i < n; ++i) permuted[perm[i]] = labels[i];
  EXPECT_NEAR(avg_density(t, ClusterAssignment::from_labels(labels)),
              avg_density(tp, ClusterAssignment::from_labels(permuted)), 1e-12);
}

TEST(Lift, SmallCasesAndFeasibility) {
  const Matrix one = lift_assignment(ClusterAssignment(2, {{0, 1}}));
  for (double v : one.data()) EXPECT_DOUBLE_EQ(v, 0.5);
  const Matrix id = lift_assignment(ClusterAssignment(2, {{0}, {1}}));
  EXPECT_EQ(id.data(), Matrix::identity(2).data());
  const auto r = sdp_residuals(lift_assignment(ClusterAssignment(5, {{0, 3}, {1}, {2, 4}})), 3);
  EXPECT_LT(max_residual(r), 1e-12);
}

TEST(Sdp, ToySeparatesTheThreeBlocks) {
  const auto sol = solve_sdp(planted_toy(), 3);
  EXPECT_LE(max_residual(sol.residuals), 1e-6);
  EXPECT_GE(sol.objective, 94.0 - 1e-4);
  const auto r = round_solution(sol.x_hat, {3, {}});
  EXPECT_TRUE(r.exact_k);
  EXPECT_EQ(r.assignment, kThreeBlocks);
}

TEST(Sdp, DominatesEveryIntegerPartition) {
  Rng rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t n = 6 + rng.below(2);
    const std::size_t k = 2 + rng.below(2);
    const Matrix t = random_symmetric(n, rng);
    const auto sol = solve_sdp(t, k);
    EXPECT_LE(max_residual(sol.residuals), 1e-6);
    for (const auto& a : all_partitions(n, k)) EXPECT_GE(sol.objective, inner(t, lift_assignment(a)) - 1e-4);
  }
}

TEST(Sdp, ConstantMatrixIsFeasibleAndTight) {
  Matrix t(5, 5, 2.0);
  const auto sol = solve_sdp(t, 2);
  EXPECT_LE(max_residual(sol.residuals), 1e-6);
  // <J, X> = e^T X e = n for every feasible X.
  EXPECT_NEAR(sol.objective, 10.0, 1e-4);
}

TEST(Sdp, ScaleInvariantRounding) {
  Matrix t = planted_toy();
  for (double& v : t.data()) v *= 1e-3;
  EXPECT_EQ(round_solution(solve_sdp(t, 3).x_hat, {3, {}}).assignment, kThreeBlocks);
}

TEST(Sdp, AsymmetricInputUsesSymmetricPart) {
  Rng rng(2);
  Matrix t = random_symmetric(6, rng);
  Matrix skewed = t;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) skewed(i, j) += 0.3, skewed(j, i) -= 0.3;
  EXPECT_NEAR(solve_sdp(skewed, 2).objective, solve_sdp(t, 2).objective, 1e-5);
}

TEST(Sdp, RejectsBadK) {
  EXPECT_THROW(solve_sdp(planted_toy(), 0), InvalidArgument);
  EXPECT_THROW(solve_sdp(planted_toy(), 7), InvalidArgument);
}

TEST(Sdp, SimplexProjection) {
  const Vector p = detail::project_simplex({3, 1, -2}, 2.0);
  EXPECT_NEAR(p[0], 2.0, 1e-15);
  EXPECT_NEAR(p[1], 0.0, 1e-15);
  EXPECT_NEAR(p[2], 0.0, 1e-15);
  const Vector q = detail::project_simplex({0.5, 0.5, 0.5}, 1.5);
  for (double v : q) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(Rounding, ExactLiftRecovered) {
  const ClusterAssignment a(7, {{0, 4}, {1, 2, 5}, {3}, {6}});
  EXPECT_EQ(threshold_components(lift_assignment(a), 1.0 / 6.0), a);
  EXPECT_EQ(round_solution(lift_assignment(a), {4, {}}).assignment, a);
}

TEST(Rounding, HighThresholdGivesSingletons) {
  const Matrix x = lift_assignment(ClusterAssignment(4, {{0, 1, 2, 3}}));
  EXPECT_EQ(threshold_components(x, 0.3).k(), 4u);
}

TEST(Rounding, AlwaysValidPartition) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(8);
    Matrix x(n, n);
    for (double& v : x.data()) v = rng.uniform(-0.5, 1.0);
    const std::size_t k = 1 + rng.below(n);
    const auto r = round_solution(x, {k, {}});
    EXPECT_EQ(r.assignment.n(), n);
    EXPECT_GE(r.c, 1.0);
    EXPECT_DOUBLE_EQ(r.lambda, r.c / static_cast<double>(n));
    EXPECT_EQ(r.exact_k, r.assignment.k() == k);
  }
}

TEST(Rounding, GridBelowOneRejected) {
  EXPECT_THROW(round_solution(Matrix::identity(3), {2, {0.5}}), InvalidArgument);
}

TEST(Baselines, SpectralMergesHighAffinityBlocks) {
  const auto a = spectral_baseline(planted_toy(), 3, 0);
  EXPECT_TRUE(same_cluster(a, 2, 4));
  EXPECT_EQ(a.k(), 3u);
}

TEST(Baselines, RecoverWellSeparatedBlocks) {
  const ClusterAssignment truth(9, {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}});
  const auto labels = truth.labels();
  Matrix t(9, 9);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) t(i, j) = labels[i] == labels[j] ? 10.0 : 1.0;
  EXPECT_EQ(spectral_baseline(t, 3, 1), truth);
  EXPECT_EQ(spectral_baseline(t, 3, 1, Laplacian::normalized), truth);
  EXPECT_EQ(lloyd_baseline(t, 3, 1), truth);
}

TEST(Baselines, KEqualsNGivesSingletons) {
  Rng rng(1);
  const Matrix t = random_symmetric(5, rng);
  EXPECT_EQ(spectral_baseline(t, 5).k(), 5u);
  EXPECT_EQ(lloyd_baseline(t, 5).k(), 5u);
}

TEST(Baselines, SeededAndDeterministic) {
  Rng rng(6);
  const Matrix t = random_symmetric(8, rng);
  EXPECT_EQ(lloyd_baseline(t, 3, 4), lloyd_baseline(t, 3, 4));
  EXPECT_EQ(spectral_baseline(t, 3, 4), spectral_baseline(t, 3, 4));
}

TEST(Exhaustive, ToyOptimum) {
  const auto r = exhaustive_best_partition(planted_toy(), 3);
  EXPECT_EQ(r.assignment, kThreeBlocks);
  EXPECT_NEAR(r.value, 94.0 / 3.0, 1e-12);
}

TEST(Exhaustive, ForcedAndHandChecked) {
  Matrix two(2, 2, 1.0);
  EXPECT_EQ(exhaustive_best_partition(two, 2).assignment, ClusterAssignment(2, {{0}, {1}}));
  Matrix t(3, 3);
  const double v[3][3] = {{1, 4, 0}, {4, 1, 0}, {0, 0, 2}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) t(i, j) = v[i][j];
  // {0,1},{2}: (10/2 + 2)/2 = 3.5; {0,2},{1}: (3/2 + 1)/2 = 1.25; {0},{1,2}: (1 + 3/2)/2 = 1.25
  const auto r = exhaustive_best_partition(t, 2);
  EXPECT_EQ(r.assignment, ClusterAssignment(3, {{0, 1}, {2}}));
  EXPECT_DOUBLE_EQ(r.value, 3.5);
  EXPECT_THROW(exhaustive_best_partition(Matrix(13, 13), 2), InvalidArgument);
}
