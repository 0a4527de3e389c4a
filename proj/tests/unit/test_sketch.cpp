// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "gtae/sketch.hpp"

using namespace gtae;

TEST(Projection, ModesAgreeExactly) {
  const ProjectionHandle mat(50, 7, 99, ProjectionMode::materialized);
  const ProjectionHandle ctr(50, 7, 99, ProjectionMode::counter);
  for (std::size_t r = 0; r < 50; ++r)
    for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(mat.entry(r, c), ctr.entry(r, c));
  Rng rng(1);
  Vector g(50);
  for (double& v : g) v = rng.gaussian();
  EXPECT_EQ(project(mat, g), project(ctr, g));
}

TEST(Projection, EntryMoments) {
  const std::size_t p = 400, d = 100;
  const ProjectionHandle h(p, d, 7, ProjectionMode::counter);
  double s = 0, s2 = 0;
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      s += h.entry(r, c);
      s2 += h.entry(r, c) * h.entry(r, c);
    }
  const double n = static_cast<double>(p * d);
  EXPECT_NEAR(s / n, 0.0, 4.0 * 0.1 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0 / d, 0.03 / d);
}

TEST(Projection, SeedsChangeTheMatrix) {
  const ProjectionHandle a(10, 4, 1, ProjectionMode::counter), b(10, 4, 2, ProjectionMode::counter);
  EXPECT_NE(a.entry(3, 2), b.entry(3, 2));
}

TEST(Projection, PreservesNormsWithinEps) {
  const std::size_t p = 2000;
  const double eps = 0.5;
  const std::size_t d = choose_dim(p, eps);
  const ProjectionHandle h = ProjectionHandle::gaussian(p, d, 3);
  Rng rng(4);
  std::vector<Vector> gs(50, Vector(p));
  for (auto& g : gs)
    for (double& v : g) v = rng.gaussian();
  const auto out = project_all(h, gs);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const double ratio = norm2(out[i]) / norm2(gs[i]);
    EXPECT_GT(ratio * ratio, 1.0 - eps);
    EXPECT_LT(ratio * ratio, 1.0 + eps);
  }
}

TEST(Projection, AdjointIdentity) {
  // (P^T g) . w == g . (P w)
  const ProjectionHandle h(30, 5, 12, ProjectionMode::counter);
  Rng rng(2);
  Vector g(30), w(5);
  for (double& v : g) v = rng.gaussian();
  for (double& v : w) v = rng.gaussian();
  EXPECT_NEAR(dot(project(h, g), w), dot(g, expand(h, w)), 1e-12);
}

TEST(Projection, IdentityModeIsExact) {
  const ProjectionHandle h(4, 4, 0, ProjectionMode::identity);
  const Vector g = {1, -2, 3, 0.5};
  EXPECT_EQ(project(h, g), g);
  EXPECT_EQ(expand(h, g), g);
  EXPECT_THROW(ProjectionHandle(4, 3, 0, ProjectionMode::identity), InvalidArgument);
}

TEST(Projection, LiftAddsToAnchor) {
  const ModelParams anchor{{ArchKind::linear, 2, 0, 2}, {1, 2, 3}};
  const ProjectionHandle h(3, 3, 0, ProjectionMode::identity);
  const Vector w = {0.5, 0, -1};
  EXPECT_EQ(lift(h, w, anchor).theta, (Vector{1.5, 2, 2}));
  const ProjectionHandle wrong(4, 2, 0, ProjectionMode::counter);
  EXPECT_THROW(lift(wrong, Vector{0, 0}, anchor), InvalidArgument);
}

TEST(Projection, DimensionMismatchThrows) {
  const ProjectionHandle h(6, 2, 0, ProjectionMode::counter);
  EXPECT_THROW(project(h, Vector(5)), InvalidArgument);
  EXPECT_THROW(expand(h, Vector(3)), InvalidArgument);
}

TEST(ChooseDim, LogarithmicInP) {
  const std::size_t d = choose_dim(683370, 1.0);
  EXPECT_GE(d, 200u);
  EXPECT_LE(d, 202u);
  EXPECT_EQ(choose_dim(10, 0.1), 10u);
  EXPECT_EQ(choose_dim(2, 1.0), 2u);
  EXPECT_GT(choose_dim(1000, 0.5), choose_dim(1000, 1.0));
  EXPECT_THROW(choose_dim(1, 1.0), InvalidArgument);
  EXPECT_THROW(choose_dim(100, 0.0), InvalidArgument);
}
