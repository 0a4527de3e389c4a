// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded Gaussian random projection P (p x d, entries N(0, 1/d)).
//
// Entry (r, c) is the (r*d + c)-th draw of a counter-based Gaussian stream,
// so P never has to be stored: `counter` mode regenerates rows on demand and
// `materialized` mode caches the very same numbers. `identity` (d == p) is
// the exact regime used to separate projection error from everything else.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gtae/error.hpp"
#include "gtae/linalg.hpp"
#include "gtae/models.hpp"
#include "gtae/rng.hpp"

namespace gtae {

enum class ProjectionMode : std::uint8_t { materialized = 0, counter = 1, identity = 2 };

inline std::string_view to_string(ProjectionMode m) {
  switch (m) {
    case ProjectionMode::materialized: return "materialized";
    case ProjectionMode::counter: return "counter";
    case ProjectionMode::identity: return "identity";
  }
  return "?";
}

/// Materialize P when it has at most this many entries.
inline constexpr std::size_t kMaterializeLimit = std::size_t{1} << 24;

class ProjectionHandle {
 public:
  ProjectionHandle() = default;

  ProjectionHandle(std::size_t p, std::size_t d, std::uint64_t seed, ProjectionMode mode)
      : p_(p), d_(d), seed_(seed), mode_(mode), scale_(1.0 / std::sqrt(static_cast<double>(d))) {
    require(p >= 1 && d >= 1, "projection: p and d must be >= 1");
    if (mode == ProjectionMode::identity) require(p == d, "projection: identity mode needs d == p");
    if (mode == ProjectionMode::materialized) {
      auto m = std::make_shared<Matrix>(p, d);
      for (std::size_t r = 0; r < p; ++r)
        for (std::size_t c = 0; c < d; ++c) (*m)(r, c) = generated(r, c);
      cache_ = std::move(m);
    }
  }

  /// Materialized for small p*d, counter-based otherwise.
  static ProjectionHandle gaussian(std::size_t p, std::size_t d, std::uint64_t seed) {
    return {p, d, seed, p * d <= kMaterializeLimit ? ProjectionMode::materialized : ProjectionMode::counter};
  }

  std::size_t p() const { return p_; }
  std::size_t d() const { return d_; }
  std::uint64_t seed() const { return seed_; }
  ProjectionMode mode() const { return mode_; }

  double entry(std::size_t r, std::size_t c) const {
    if (cache_) return (*cache_)(r, c);
    if (mode_ == ProjectionMode::identity) return r == c ? 1.0 : 0.0;
    return generated(r, c);
  }

  /// Row r of P written into `out` (length d).
  void row(std::size_t r, std::span<double> out) const {
    if (cache_) {
      auto src = cache_->row(r);
      std::copy(src.begin(), src.end(), out.begin());
      return;
    }
    for (std::size_t c = 0; c < d_; ++c) out[c] = entry(r, c);
  }

 private:
  double generated(std::size_t r, std::size_t c) const {
    return scale_ * counter_gaussian(seed_, static_cast<std::uint64_t>(r) * d_ + c);
  }

  std::size_t p_ = 0;
  std::size_t d_ = 0;
  std::uint64_t seed_ = 0;
  ProjectionMode mode_ = ProjectionMode::counter;
  double scale_ = 1.0;
  std::shared_ptr<const Matrix> cache_;
};

/// Projection dimension ceil(constant * ln p / eps^2), clamped to [min(8, p), p].
/// With the default constant, eps = 1 gives about 15 ln p.
inline std::size_t choose_dim(std::size_t p, double eps, double constant = 15.0) {
  require(p >= 2, "choose_dim: p must be >= 2");
  require(eps > 0.0 && eps <= 1.0, "choose_dim: eps must be in (0, 1]");
  const double raw = std::ceil(constant * std::log(static_cast<double>(p)) / (eps * eps));
  const double lo = static_cast<double>(std::min<std::size_t>(8, p));
  return static_cast<std::size_t>(std::clamp(raw, lo, static_cast<double>(p)));
}

/// P^T g for a batch of vectors. Rows of P are visited once, in order, so the
/// result is identical in every mode.
inline std::vector<Vector> project_all(const ProjectionHandle& h, const std::vector<Vector>& gs) {
  for (const auto& g : gs)
    require(g.size() == h.p(), "project: dimension mismatch (expected " + std::to_string(h.p()) + ")");
  std::vector<Vector> out(gs.size(), Vector(h.d(), 0.0));
  if (h.mode() == ProjectionMode::identity) {
    for (std::size_t i = 0; i < gs.size(); ++i) out[i] = gs[i];
    return out;
  }
  Vector prow(h.d());
  for (std::size_t r = 0; r < h.p(); ++r) {
    h.row(r, prow);
    for (std::size_t i = 0; i < gs.size(); ++i) {
      const double gr = gs[i][r];
      if (gr == 0.0) continue;
      axpy(gr, prow, out[i]);
    }
  }
  return out;
}

inline Vector project(const ProjectionHandle& h, const Vector& g) { return project_all(h, {g})[0]; }

/// P w (length p).
inline Vector expand(const ProjectionHandle& h, std::span<const double> w) {
  require(w.size() == h.d(), "lift: dimension mismatch (expected " + std::to_string(h.d()) + ")");
  Vector out(h.p(), 0.0);
  Vector prow(h.d());
  for (std::size_t r = 0; r < h.p(); ++r) {
    h.row(r, prow);
    out[r] = dot(prow, w);
  }
  return out;
}

/// theta* + P w, the full-dimensional parameters of a projected solution.
inline ModelParams lift(const ProjectionHandle& h, std::span<const double> w, const ModelParams& theta_star) {
  require(theta_star.theta.size() == h.p(), "lift: theta* has " + std::to_string(theta_star.theta.size()) +
                                                " parameters, projection expects " + std::to_string(h.p()));
  ModelParams out = theta_star;
  const Vector pw = expand(h, w);
  for (std::size_t r = 0; r < h.p(); ++r) out.theta[r] += pw[r];
  return out;
}

}  // namespace gtae
