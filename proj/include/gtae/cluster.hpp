// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Task grouping by average density. The integer problem
//   max (1/k) sum_j v_j^T T v_j / v_j^T v_j
// is relaxed to the SDP
//   max <T, X>  s.t.  X e = e, tr X = k, X >= 0 (entrywise), X PSD
// and the relaxed solution is rounded by thresholding. Spectral clustering,
// Lloyd's algorithm and exhaustive search serve as baselines.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "gtae/error.hpp"
#include "gtae/flops.hpp"
#include "gtae/linalg.hpp"
#include "gtae/rng.hpp"

namespace gtae {

/// A partition of {0, ..., n-1}. Canonical form: members sorted inside each
/// cluster, clusters ordered by their smallest member.
class ClusterAssignment {
 public:
  ClusterAssignment() = default;

  ClusterAssignment(std::size_t n, std::vector<std::vector<std::size_t>> clusters)
      : n_(n), clusters_(std::move(clusters)) {
    std::vector<char> seen(n, 0);
    for (auto& c : clusters_) {
      require(!c.empty(), "cluster assignment: empty cluster");
      std::sort(c.begin(), c.end());
      for (std::size_t t : c) {
        require(t < n, "cluster assignment: task index out of range");
        require(!seen[t], "cluster assignment: task " + std::to_string(t) + " appears twice");
        seen[t] = 1;
      }
    }
    require(std::all_of(seen.begin(), seen.end(), [](char s) { return s; }),
            "cluster assignment: clusters do not cover every task");
    std::sort(clusters_.begin(), clusters_.end());
  }

  /// From per-task labels; cluster ids need not be contiguous.
  static ClusterAssignment from_labels(const std::vector<std::size_t>& labels) {
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::size_t> ids;
    for (std::size_t t = 0; t < labels.size(); ++t) {
      const auto it = std::find(ids.begin(), ids.end(), labels[t]);
      if (it == ids.end()) {
        ids.push_back(labels[t]);
        clusters.push_back({t});
      } else {
        clusters[static_cast<std::size_t>(it - ids.begin())].push_back(t);
      }
    }
    return {labels.size(), std::move(clusters)};
  }

  std::size_t n() const { return n_; }
  std::size_t k() const { return clusters_.size(); }
  const std::vector<std::vector<std::size_t>>& clusters() const { return clusters_; }

  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> out(n_);
    for (std::size_t c = 0; c < clusters_.size(); ++c)
      for (std::size_t t : clusters_[c]) out[t] = c;
    return out;
  }

  friend bool operator==(const ClusterAssignment&, const ClusterAssignment&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::vector<std::size_t>> clusters_;
};

inline double avg_density(const Matrix& t, const ClusterAssignment& a) {
  require(t.rows() == a.n() && t.cols() == a.n(), "avg_density: matrix size does not match the assignment");
  require(a.k() >= 1, "avg_density: no clusters");
  double total = 0.0;
  for (const auto& c : a.clusters()) {
    double s = 0.0;
    for (std::size_t i : c)
      for (std::size_t j : c) s += t(i, j);
    total += s / static_cast<double>(c.size());
  }
  return total / static_cast<double>(a.k());
}

/// X = sum_j v_j v_j^T / |C_j|.
inline Matrix lift_assignment(const ClusterAssignment& a) {
  Matrix x(a.n(), a.n());
  for (const auto& c : a.clusters()) {
    const double w = 1.0 / static_cast<double>(c.size());
    for (std::size_t i : c)
      for (std::size_t j : c) x(i, j) = w;
  }
  return x;
}

// ---------------------------------------------------------------------------
// SDP relaxation

struct SdpOptions {
  double tolerance = 1e-6;            // primal and dual residuals
  double objective_tolerance = 1e-8;  // relative objective change
  double failure_residual = 1e-4;
  std::size_t max_iterations = 20000;
  double rho = 1.0;
};

struct SdpResiduals {
  double row_sum = 0.0;    // max |X e - e|
  double trace = 0.0;      // |tr X - k|
  double min_entry = 0.0;  // max(0, -min X_ij)
  double min_eigen = 0.0;  // max(0, -lambda_min)
};

struct SdpSolution {
  Matrix x_hat;
  double objective = 0.0;  // <sym(T), X>
  SdpResiduals residuals;
  std::size_t iterations = 0;
};

namespace detail {

/// Orthonormal basis of the complement of e (n x (n-1)), from the Householder
/// reflection that swaps e_1 and e / sqrt(n).
inline Matrix complement_basis(std::size_t n) {
  Vector u(n, 1.0 / std::sqrt(static_cast<double>(n)));
  u[0] -= 1.0;
  const double uu = dot(u, u);
  Matrix q(n, n - 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 1; j < n; ++j) q(i, j - 1) = (i == j ? 1.0 : 0.0) - 2.0 * u[i] * u[j] / uu;
  return q;
}

/// Euclidean projection onto {lambda >= 0, sum lambda = s}.
inline Vector project_simplex(const Vector& v, double s) {
  Vector sorted(v);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cum = 0.0, tau = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cum += sorted[i];
    const double t = (cum - s) / static_cast<double>(i + 1);
    if (sorted[i] - t > 0.0) tau = t;
  }
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

/// Projection onto {X PSD, X e = e, tr X = k}: X = e e^T / n + Q W Q^T with
/// W PSD of trace k - 1.
inline Matrix project_affine_psd(const Matrix& y, const Matrix& q, std::size_t k) {
  const std::size_t n = y.rows();
  Matrix x(n, n, 1.0 / static_cast<double>(n));
  if (n == 1 || k == 1) return x;
  const Matrix w = symmetrized(matmul(matmul(q.transposed(), y), q));
  const EigenResult eig = jacobi_eigen(w);
  const Vector lambda = project_simplex(eig.values, static_cast<double>(k) - 1.0);
  const Matrix qv = matmul(q, eig.vectors);
  for (std::size_t c = 0; c < lambda.size(); ++c) {
    if (lambda[c] == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = lambda[c] * qv(i, c);
      for (std::size_t j = 0; j < n; ++j) x(i, j) += a * qv(j, c);
    }
  }
  return symmetrized(x);
}

inline double frobenius_diff(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

inline SdpResiduals sdp_residuals(const Matrix& x, std::size_t k) {
  const std::size_t n = x.rows();
  SdpResiduals r;
  double tr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += x(i, j);
      r.min_entry = std::max(r.min_entry, -x(i, j));
    }
    r.row_sum = std::max(r.row_sum, std::abs(row - 1.0));
    tr += x(i, i);
  }
  r.trace = std::abs(tr - static_cast<double>(k));
  r.min_eigen = std::max(0.0, -jacobi_eigen(symmetrized(x)).values.front());
  return r;
}

inline double max_residual(const SdpResiduals& r) {
  return std::max({r.row_sum, r.trace, r.min_entry, r.min_eigen});
}

/// ADMM on the split X in {PSD, X e = e, tr X = k}, Z >= 0, X = Z. Each
/// X-step is an exact projection. rho is rebalanced every 25 iterations
/// during the first 5000.
inline SdpSolution solve_sdp(const Matrix& t, std::size_t k, const SdpOptions& opts = {},
                             FlopsLedger* ledger = nullptr) {
  require(t.rows() == t.cols(), "solve_sdp: matrix must be square");
  const std::size_t n = t.rows();
  require(k >= 1 && k <= n, "solve_sdp: k must be in [1, n]");
  const Matrix sym = symmetrized(t);
  double scale = 0.0;
  for (double v : sym.data()) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) scale = 1.0;
  Matrix c = sym;
  for (double& v : c.data()) v /= scale;

  const Matrix q = n > 1 ? detail::complement_basis(n) : Matrix(1, 0);
  Matrix x(n, n, 1.0 / static_cast<double>(n));
  Matrix z = x, u(n, n);
  double rho = opts.rho;
  double previous = std::numeric_limits<double>::infinity();
  SdpSolution sol;
  double primal = 0.0, dual = 0.0;
  for (sol.iterations = 1; sol.iterations <= opts.max_iterations; ++sol.iterations) {
    Matrix y(n, n);
    for (std::size_t i = 0; i < y.data().size(); ++i) y.data()[i] = z.data()[i] - u.data()[i] + c.data()[i] / rho;
    x = detail::project_affine_psd(y, q, k);
    const Matrix z_old = z;
    for (std::size_t i = 0; i < z.data().size(); ++i) z.data()[i] = std::max(0.0, x.data()[i] + u.data()[i]);
    for (std::size_t i = 0; i < u.data().size(); ++i) u.data()[i] += x.data()[i] - z.data()[i];

    primal = detail::frobenius_diff(x, z);
    dual = rho * detail::frobenius_diff(z, z_old);
    const double objective = inner(c, x);
    if (!std::isfinite(objective)) throw NumericalError("solve_sdp: non-finite objective");
    const double change = std::abs(objective - previous) / std::max(1.0, std::abs(objective));
    previous = objective;
    if (primal <= opts.tolerance && dual <= opts.tolerance && change <= opts.objective_tolerance) break;

    if (sol.iterations % 25 != 0 || sol.iterations > 5000) continue;
    if (primal > 10.0 * dual) {
      rho *= 2.0;
      for (double& v : u.data()) v *= 0.5;
    } else if (dual > 10.0 * primal) {
      rho *= 0.5;
      for (double& v : u.data()) v *= 2.0;
    }
  }
  sol.iterations = std::min(sol.iterations, opts.max_iterations);
  sol.x_hat = x;
  sol.objective = inner(sym, x);
  sol.residuals = sdp_residuals(x, k);
  if (std::max({primal, dual, max_residual(sol.residuals)}) > opts.failure_residual)
    throw NumericalError("solve_sdp: no convergence after " + std::to_string(sol.iterations) +
                         " iterations (primal residual " + std::to_string(primal) + ")");
  if (ledger) {
    Workload w;
    w.iterations = sol.iterations;
    w.n = n;
    ledger->add(Phase::sdp, flops_for(Phase::sdp, w));
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Rounding

/// Connected components of the graph with an edge wherever X_uv >= lambda
/// (either orientation).
inline ClusterAssignment threshold_components(const Matrix& x, double lambda) {
  const std::size_t n = x.rows();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  std::function<std::size_t(std::size_t)> find = [&](std::size_t v) {
    return parent[v] == v ? v : parent[v] = find(parent[v]);
  };
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (x(u, v) >= lambda || x(v, u) >= lambda) parent[std::max(find(u), find(v))] = std::min(find(u), find(v));
  std::vector<std::size_t> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = find(v);
  return ClusterAssignment::from_labels(labels);
}

struct RoundingConfig {
  std::size_t k = 0;
  std::vector<double> grid;  // values of c, lambda = c / n; empty means 1.00, 1.25, ..., 10.00

  std::vector<double> resolved_grid() const {
    if (!grid.empty()) return grid;
    std::vector<double> g;
    for (int i = 0; i <= 36; ++i) g.push_back(1.0 + 0.25 * i);
    return g;
  }
};

struct RoundingResult {
  ClusterAssignment assignment;
  double c = 0.0;
  double lambda = 0.0;
  bool exact_k = false;
};

/// Scans c in grid order; the first c giving exactly k clusters wins. If none
/// does, the cluster count nearest to k wins, ties going to the smaller c.
inline RoundingResult round_solution(const Matrix& x_hat, const RoundingConfig& cfg) {
  require(x_hat.rows() == x_hat.cols() && x_hat.rows() >= 1, "round_solution: matrix must be square");
  const std::size_t n = x_hat.rows();
  std::vector<double> grid = cfg.resolved_grid();
  for (double c : grid) require(c >= 1.0, "round_solution: grid values must be >= 1");
  std::sort(grid.begin(), grid.end());
  RoundingResult best;
  std::size_t best_gap = std::numeric_limits<std::size_t>::max();
  for (double c : grid) {
    const double lambda = c / static_cast<double>(n);
    ClusterAssignment a = threshold_components(x_hat, lambda);
    const std::size_t gap = a.k() > cfg.k ? a.k() - cfg.k : cfg.k - a.k();
    if (gap < best_gap) {
      best_gap = gap;
      best = {std::move(a), c, lambda, gap == 0};
      if (gap == 0) break;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Baselines

struct KMeansResult {
  std::vector<std::size_t> labels;
  double cost = 0.0;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// One Lloyd run from a k-means++ seeding. Every cluster is kept nonempty.
inline KMeansResult lloyd_run(const Matrix& pts, std::size_t k, Rng& rng) {
  const std::size_t n = pts.rows(), dim = pts.cols();
  Matrix centers(k, dim);
  std::vector<char> chosen(n, 0);
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  std::copy(pts.row(first).begin(), pts.row(first).end(), centers.row(0).begin());
  chosen[first] = 1;
  Vector nearest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(pts.row(i), centers.row(c - 1)));
      if (!chosen[i]) total += nearest[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        pick = i;
        r -= nearest[i];
        if (r <= 0.0) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = 1;
    std::copy(pts.row(pick).begin(), pts.row(pick).end(), centers.row(c).begin());
  }

  std::vector<std::size_t> labels(n, k);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(pts.row(i), centers.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(pts.row(i), centers.row(c));
        if (d < best_d) best = c, best_d = d;
      }
      if (labels[i] != best) labels[i] = best, changed = true;
    }
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t l : labels) ++sizes[l];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] < 2) continue;
        const double d = sq_dist(pts.row(i), centers.row(labels[i]));
        if (d > far_d) far = i, far_d = d;
      }
      --sizes[labels[far]];
      labels[far] = c;
      sizes[c] = 1;
      changed = true;
    }
    std::fill(centers.data().begin(), centers.data().end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) axpy(1.0, pts.row(i), centers.row(labels[i]));
    for (std::size_t c = 0; c < k; ++c)
      for (double& v : centers.row(c)) v /= static_cast<double>(sizes[c]);
    if (!changed) break;
  }
  KMeansResult out{labels, 0.0};
  for (std::size_t i = 0; i < n; ++i) out.cost += sq_dist(pts.row(i), centers.row(labels[i]));
  return out;
}

}  // namespace detail

/// Best of `restarts` seeded Lloyd runs by within-cluster squared distance.
inline ClusterAssignment kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t restarts = 10) {
  require(k >= 1 && k <= points.rows(), "kmeans: k must be in [1, n]");
  KMeansResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, "kmeans", r));
    KMeansResult run = detail::lloyd_run(points, k, rng);
    if (run.cost < best.cost) best = std::move(run);
  }
  return ClusterAssignment::from_labels(best.labels);
}

inline ClusterAssignment lloyd_baseline(const Matrix& t, std::size_t k, std::uint64_t seed = 0) {
  return kmeans(symmetrized(t), k, derive_seed(seed, "lloyd"));
}

enum class Laplacian { unnormalized, normalized };

/// Spectral clustering on sym(T), shifted to be nonnegative: the k eigenvectors
/// of the Laplacian with smallest eigenvalues embed the tasks, then k-means.
inline ClusterAssignment spectral_baseline(const Matrix& t, std::size_t k, std::uint64_t seed = 0,
                                           Laplacian kind = Laplacian::unnormalized) {
  const std::size_t n = t.rows();
  require(k >= 1 && k <= n, "spectral_baseline: k must be in [1, n]");
  Matrix a = symmetrized(t);
  const double lo = *std::min_element(a.data().begin(), a.data().end());
  if (lo < 0.0)
    for (double& v : a.data()) v -= lo;
  Vector degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) degree[i] += a(i, j);
  Matrix lap(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (kind == Laplacian::unnormalized) {
        lap(i, j) = (i == j ? degree[i] : 0.0) - a(i, j);
      } else {
        const double norm = std::sqrt(degree[i] * degree[j]);
        lap(i, j) = (i == j ? 1.0 : 0.0) - (norm > 0.0 ? a(i, j) / norm : 0.0);
      }
    }
  const EigenResult eig = jacobi_eigen(lap);
  Matrix embed(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) embed(i, c) = eig.vectors(i, c);
  if (kind == Laplacian::normalized)
    for (std::size_t i = 0; i < n; ++i) {
      const double r = norm2(embed.row(i));
      if (r > 0.0)
        for (double& v : embed.row(i)) v /= r;
    }
  return kmeans(embed, k, derive_seed(seed, "spectral"));
}

inline constexpr std::size_t kMaxExhaustiveTasks = 12;

struct ExhaustiveResult {
  ClusterAssignment assignment;
  double value = 0.0;
};

/// Maximizes average density over all partitions into exactly k clusters.
/// Partitions are visited in lexicographic order of their restricted growth
/// strings and only a strict improvement replaces the incumbent.
inline ExhaustiveResult exhaustive_best_partition(const Matrix& t, std::size_t k) {
  const std::size_t n = t.rows();
  require(t.cols() == n, "exhaustive_best_partition: matrix must be square");
  require(n <= kMaxExhaustiveTasks, "exhaustive_best_partition: n = " + std::to_string(n) + " exceeds " +
                                        std::to_string(kMaxExhaustiveTasks));
  require(k >= 1 && k <= n, "exhaustive_best_partition: k must be in [1, n]");
  std::vector<std::size_t> rgs(n, 0), best_labels;
  double best = -std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t)> visit = [&](std::size_t pos, std::size_t used) {
    if (used + (n - pos) < k) return;
    if (pos == n) {
      if (used != k) return;
      const double v = avg_density(t, ClusterAssignment::from_labels(rgs));
      if (v > best + 1e-12 * std::max(1.0, std::abs(best)) || best_labels.empty()) best = v, best_labels = rgs;
      return;
    }
    for (std::size_t label = 0; label <= used && label < k; ++label) {
      rgs[pos] = label;
      visit(pos + 1, std::max(used, label + 1));
    }
  };
  visit(0, 0);
  return {ClusterAssignment::from_labels(best_labels), best};
}

}  // namespace gtae
