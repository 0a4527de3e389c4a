// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// First-order expansion of a model around an anchor theta*:
//   f_W(x) ~ f_theta*(x) + grad f_theta*(x) . (W - theta*)
// plus the measurements that tell how good that expansion is.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "gtae/error.hpp"
#include "gtae/models.hpp"
#include "gtae/rng.hpp"

namespace gtae {

/// Linearization features of one binary sample: g = grad f(x), f0 = f(x),
/// b = -y * f0.
struct RawFeatureRecord {
  std::size_t task = 0;  // task index in the collection
  double y = 0.0;
  Vector g;
  double f0 = 0.0;
  double b = 0.0;
};

inline RawFeatureRecord linearize_sample(const ModelParams& theta_star, const Sample& s, std::size_t task) {
  RawFeatureRecord r;
  r.task = task;
  r.y = s.y;
  r.g = grad_output(theta_star, s.x);
  r.f0 = forward(theta_star, s.x);
  r.b = -s.y * r.f0;
  return r;
}

/// One record per sample of `split`, ordered by (task index, sample index).
inline std::vector<RawFeatureRecord> extract_features(const ModelParams& theta_star, const TaskCollection& tasks,
                                                      SplitKind split) {
  require(theta_star.spec.input_dim == tasks.input_dim, "extract_features: model input_dim " +
                                                            std::to_string(theta_star.spec.input_dim) +
                                                            " does not match tasks' " + std::to_string(tasks.input_dim));
  std::vector<RawFeatureRecord> out;
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (const auto& s : tasks.tasks[t].split(split)) out.push_back(linearize_sample(theta_star, s, t));
  return out;
}

/// Per-class linearization of a multiclass sample.
struct MulticlassRecord {
  std::size_t task = 0;
  std::size_t label = 0;
  std::vector<Vector> g;  // one gradient per class output
  Vector f0;              // class scores at theta*
};

inline std::vector<MulticlassRecord> extract_multiclass_features(const ModelParams& theta_star,
                                                                 const TaskCollection& tasks, SplitKind split) {
  require(theta_star.spec.outputs() >= 2, "extract_multiclass_features: model has a single output");
  std::vector<MulticlassRecord> out;
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (const auto& s : tasks.tasks[t].split(split)) {
      MulticlassRecord r;
      r.task = t;
      r.label = static_cast<std::size_t>(s.y);
      r.f0 = forward_scores(theta_star, s.x);
      for (std::size_t c = 0; c < theta_star.spec.outputs(); ++c) r.g.push_back(grad_output(theta_star, s.x, c));
      out.push_back(std::move(r));
    }
  return out;
}

inline double finetune_distance(const ModelParams& theta_star, const ModelParams& w) {
  require(theta_star.theta.size() == w.theta.size(), "finetune_distance: parameter count mismatch");
  const double base = norm2(theta_star.theta);
  require(base > 0.0, "finetune_distance: theta* has zero norm");
  double diff = 0.0;
  for (std::size_t i = 0; i < w.theta.size(); ++i) {
    const double d = w.theta[i] - theta_star.theta[i];
    diff += d * d;
  }
  return std::sqrt(diff) / base;
}

enum class RssAggregation {
  pooled,      // sum residual^2 / sum f_W^2 over the sample set
  per_sample,  // mean of residual^2 / f_W^2
};

inline constexpr double kDegenerateNormalization = 1e-12;

/// Normalized squared residual of the first-order expansion at W over `samples`.
/// Throws when sum f_W^2 < 1e-12 (pooled) or any f_W^2 < 1e-12 (per sample).
inline double taylor_rss(const ModelParams& theta_star, const ModelParams& w, const SampleRefs& samples,
                         RssAggregation agg = RssAggregation::pooled) {
  require(theta_star.spec == w.spec, "taylor_rss: architectures differ");
  require(!samples.empty(), "taylor_rss: empty sample set");
  Vector delta(w.theta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = w.theta[i] - theta_star.theta[i];
  double num = 0.0, den = 0.0, ratio_sum = 0.0;
  for (const Sample* s : samples) {
    const double fw = forward(w, s->x);
    const double f0 = forward(theta_star, s->x);
    const double res = fw - f0 - dot(grad_output(theta_star, s->x), delta);
    if (agg == RssAggregation::per_sample) {
      if (fw * fw < kDegenerateNormalization) throw NumericalError("taylor_rss: degenerate normalization");
      ratio_sum += res * res / (fw * fw);
    }
    num += res * res;
    den += fw * fw;
  }
  if (agg == RssAggregation::per_sample) return ratio_sum / static_cast<double>(samples.size());
  if (den < kDegenerateNormalization) throw NumericalError("taylor_rss: degenerate normalization");
  return num / den;
}

struct TaylorReport {
  double finetune_distance = 0.0;
  double rss = 0.0;
  std::size_t sample_count = 0;  // subsets whose fine-tuning reached this distance
};

struct SweepOptions {
  TrainConfig finetune;         // epochs bound how far fine-tuning may go
  std::size_t subset_size = 0;  // 0: half of the tasks
  std::uint64_t seed = 0;
};

/// Fine-tunes theta* on `subset_count` random task subsets and records the
/// expansion error on the subset's training data the first time the
/// fine-tune distance crosses each target. Targets never reached are omitted.
inline std::vector<TaylorReport> rss_sweep(const ModelParams& theta_star, const TaskCollection& tasks,
                                           std::size_t subset_count, std::vector<double> targets,
                                           const SweepOptions& opts) {
  require(subset_count >= 1, "rss_sweep: subset_count must be >= 1");
  require(!targets.empty(), "rss_sweep: no target distances");
  require(tasks.size() >= 1, "rss_sweep: no tasks");
  std::sort(targets.begin(), targets.end());
  const std::size_t size = opts.subset_size == 0 ? std::max<std::size_t>(1, tasks.size() / 2)
                                                 : std::min(opts.subset_size, tasks.size());
  std::vector<double> dist_sum(targets.size(), 0.0), rss_sum(targets.size(), 0.0);
  std::vector<std::size_t> hits(targets.size(), 0);

  Rng rng(derive_seed(opts.seed, "rss-sweep"));
  for (std::size_t k = 0; k < subset_count; ++k) {
    TaskSubset subset = all_tasks(tasks.size());
    rng.shuffle(subset);
    subset.resize(size);
    std::sort(subset.begin(), subset.end());
    const SampleRefs data = gather(tasks, subset, SplitKind::train);

    std::size_t next = 0;
    TrainConfig cfg = opts.finetune;
    cfg.seed = derive_seed(opts.seed, "rss-finetune", k);
    train(theta_star, data, cfg, [&](const ModelParams& w) {
      const double dist = finetune_distance(theta_star, w);
      if (dist < targets[next]) return true;
      const double rss = taylor_rss(theta_star, w, data);
      while (next < targets.size() && dist >= targets[next]) {
        dist_sum[next] += dist;
        rss_sum[next] += rss;
        ++hits[next];
        ++next;
      }
      return next < targets.size();
    });
  }

  std::vector<TaylorReport> out;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (hits[i] == 0) continue;
    const double h = static_cast<double>(hits[i]);
    out.push_back({dist_sum[i] / h, rss_sum[i] / h, hits[i]});
  }
  std::sort(out.begin(), out.end(),
            [](const TaylorReport& a, const TaylorReport& b) { return a.finetune_distance < b.finetune_distance; });
  return out;
}

inline std::string to_csv(const std::vector<TaylorReport>& reports) {
  std::ostringstream os;
  os.precision(17);
  os << "distance,rss,sample_count\n";
  for (const auto& r : reports) os << r.finetune_distance << ',' << r.rss << ',' << r.sample_count << '\n';
  return os.str();
}

}  // namespace gtae
