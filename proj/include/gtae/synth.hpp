// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Planted-cluster benchmark: tasks in the same cluster share a teacher
// direction, labels are sign(w . x) with random flips.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <vector>

#include "gtae/cluster.hpp"
#include "gtae/error.hpp"
#include "gtae/models.hpp"
#include "gtae/rng.hpp"

namespace gtae {

struct SynthConfig {
  std::size_t n = 12;
  std::size_t k_true = 3;
  std::size_t input_dim = 10;
  std::size_t train = 100;
  std::size_t val = 50;
  std::size_t test = 100;
  double teacher_noise = 0.0;
  double flip = 0.02;
  double angle_deg = 90.0;  // pairwise angle between cluster teachers
  std::uint64_t seed = 0;

  void validate() const {
    require(k_true >= 1 && n >= k_true, "synth: need n >= k_true >= 1");
    require(input_dim >= k_true, "synth: input_dim must be >= k_true to orthogonalize the teachers");
    require(angle_deg > 0.0 && angle_deg <= 90.0, "synth: angle must be in (0, 90] degrees");
    require(angle_deg == 90.0 || input_dim >= k_true + 1, "synth: angles below 90 degrees need input_dim > k_true");
    require(flip >= 0.0 && flip < 0.5, "synth: flip rate must be in [0, 0.5)");
    require(teacher_noise >= 0.0, "synth: teacher noise must be >= 0");
    require(train >= 1 && test >= 1, "synth: train and test splits must be nonempty");
  }
};

struct SynthBenchmark {
  TaskCollection tasks;
  ClusterAssignment truth;
  std::vector<Vector> teachers;
};

/// Cluster of task t: tasks are split into k contiguous, nearly equal blocks.
inline std::size_t planted_cluster(std::size_t t, std::size_t n, std::size_t k) { return t * k / n; }

inline std::vector<Vector> orthonormal_vectors(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<Vector> out;
  while (out.size() < count) {
    Vector v(dim);
    for (double& x : v) x = rng.gaussian();
    for (const auto& u : out) axpy(-dot(u, v), u, v);
    const double r = norm2(v);
    if (r < 1e-8) continue;
    for (double& x : v) x /= r;
    out.push_back(std::move(v));
  }
  return out;
}

inline SynthBenchmark generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "teachers"));
  const bool tilted = cfg.angle_deg < 90.0;
  auto basis = orthonormal_vectors(cfg.k_true + (tilted ? 1 : 0), cfg.input_dim, rng);
  SynthBenchmark out;
  if (tilted) {
    // t_c = normalize(s m + u_c) has t_a . t_b = s^2 / (1 + s^2) = cos(angle).
    const double cosine = std::cos(cfg.angle_deg * std::numbers::pi / 180.0);
    const double s = std::sqrt(cosine / (1.0 - cosine));
    const Vector& shared = basis.back();
    for (std::size_t c = 0; c < cfg.k_true; ++c) {
      Vector t = basis[c];
      axpy(s, shared, t);
      const double r = norm2(t);
      for (double& x : t) x /= r;
      out.teachers.push_back(std::move(t));
    }
  } else {
    out.teachers.assign(basis.begin(), basis.begin() + static_cast<std::ptrdiff_t>(cfg.k_true));
  }

  out.tasks.input_dim = cfg.input_dim;
  std::vector<std::size_t> labels(cfg.n);
  const double noise_scale = cfg.teacher_noise / std::sqrt(static_cast<double>(cfg.input_dim));
  for (std::size_t t = 0; t < cfg.n; ++t) {
    labels[t] = planted_cluster(t, cfg.n, cfg.k_true);
    Rng task_rng(derive_seed(cfg.seed, "task", t));
    Vector w = out.teachers[labels[t]];
    for (double& x : w) x += noise_scale * task_rng.gaussian();
    TaskData task;
    task.id = static_cast<int>(t);
    auto draw = [&](std::size_t count, Split& split) {
      for (std::size_t i = 0; i < count; ++i) {
        Sample s;
        s.x.resize(cfg.input_dim);
        for (double& x : s.x) x = task_rng.gaussian();
        s.y = dot(w, s.x) > 0.0 ? 1.0 : -1.0;
        if (task_rng.uniform() <= cfg.flip) s.y = -s.y;
        split.push_back(std::move(s));
      }
    };
    draw(cfg.train, task.train);
    draw(cfg.val, task.val);
    draw(cfg.test, task.test);
    out.tasks.tasks.push_back(std::move(task));
  }
  out.truth = ClusterAssignment::from_labels(labels);
  return out;
}

/// Adjusted Rand index from the pair-counting contingency table. When both
/// partitions make the index degenerate (all singletons or one cluster on
/// both sides) the result is 1 for identical partitions and 0 otherwise.
inline double adjusted_rand_index(const ClusterAssignment& a, const ClusterAssignment& b) {
  require(a.n() == b.n(), "adjusted_rand_index: partitions cover different task counts");
  const auto la = a.labels(), lb = b.labels();
  auto pairs = [](double c) { return c * (c - 1.0) / 2.0; };
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::vector<double> rows(a.k(), 0.0), cols(b.k(), 0.0);
  for (std::size_t i = 0; i < la.size(); ++i) {
    table[{la[i], lb[i]}] += 1.0;
    rows[la[i]] += 1.0;
    cols[lb[i]] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [cell, c] : table) index += pairs(c);
  for (double r : rows) sum_a += pairs(r);
  for (double c : cols) sum_b += pairs(c);
  const double total = pairs(static_cast<double>(a.n()));
  const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return a == b ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace gtae
