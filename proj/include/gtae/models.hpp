// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale differentiable models (linear and one-hidden-layer ReLU MLP),
// their hand-derived gradients, a deterministic SGD trainer and the task
// containers everything else is built on.
//
// Parameter layout, flat and row-major:
//   linear: W (outputs x input_dim), b (outputs)
//   mlp1:   W1 (hidden x input_dim), b1 (hidden), W2 (outputs x hidden), b2 (outputs)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gtae/error.hpp"
#include "gtae/linalg.hpp"
#include "gtae/rng.hpp"

namespace gtae {

enum class ArchKind { linear, mlp1 };

struct ArchitectureSpec {
  ArchKind kind = ArchKind::linear;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;
  /// 2 means a single binary logit; 1 means a scalar regression output.
  std::size_t num_classes = 2;

  std::size_t outputs() const { return num_classes <= 2 ? 1 : num_classes; }

  std::size_t parameter_count() const {
    const std::size_t out = outputs();
    if (kind == ArchKind::linear) return (input_dim + 1) * out;
    return hidden_dim * input_dim + hidden_dim + out * hidden_dim + out;
  }

  void validate() const {
    require(input_dim >= 1, "architecture: input_dim must be >= 1");
    require(num_classes >= 1, "architecture: num_classes must be >= 1");
    if (kind == ArchKind::mlp1) require(hidden_dim >= 1, "architecture: mlp1 needs hidden_dim >= 1");
  }

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

struct ModelParams {
  ArchitectureSpec spec;
  Vector theta;

  std::size_t size() const { return theta.size(); }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// ---------------------------------------------------------------------------
// Task data

/// y is +1/-1 for binary tasks, a class index for multiclass, a real target
/// for regression.
struct Sample {
  Vector x;
  double y = 0.0;
};

using Split = std::vector<Sample>;

enum class SplitKind { train, val, test };

struct TaskData {
  int id = 0;
  Split train;
  Split val;
  Split test;

  const Split& split(SplitKind kind) const {
    switch (kind) {
      case SplitKind::train: return train;
      case SplitKind::val: return val;
      case SplitKind::test: return test;
    }
    return test;
  }
};

struct TaskCollection {
  std::size_t input_dim = 0;
  std::size_t num_classes = 2;
  std::vector<TaskData> tasks;

  std::size_t size() const { return tasks.size(); }

  std::size_t index_of(int id) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].id == id) return i;
    throw InvalidArgument("unknown task id " + std::to_string(id));
  }

  std::vector<int> ids() const {
    std::vector<int> out;
    for (const auto& t : tasks) out.push_back(t.id);
    return out;
  }

  void validate() const {
    require(input_dim >= 1, "task collection: input_dim must be >= 1");
    std::set<int> seen;
    for (const auto& task : tasks) {
      require(seen.insert(task.id).second, "task collection: duplicate task id " + std::to_string(task.id));
      std::set<Vector> train_x;
      for (const Split* s : {&task.train, &task.val, &task.test})
        for (const auto& sample : *s)
          require(sample.x.size() == input_dim,
                  "task collection: feature dimension mismatch in task " + std::to_string(task.id));
      for (const auto& s : task.train) train_x.insert(s.x);
      for (const Split* s : {&task.val, &task.test})
        for (const auto& sample : *s)
          require(!train_x.contains(sample.x),
                  "task collection: splits overlap in task " + std::to_string(task.id));
    }
  }
};

using SampleRefs = std::vector<const Sample*>;
using TaskSubset = std::vector<std::size_t>;  // sorted task indices

/// Pooled samples of the given split over the task indices in `subset`.
inline SampleRefs gather(const TaskCollection& tasks, const TaskSubset& subset, SplitKind kind) {
  SampleRefs out;
  for (std::size_t t : subset) {
    require(t < tasks.size(), "gather: task index out of range");
    for (const auto& s : tasks.tasks[t].split(kind)) out.push_back(&s);
  }
  return out;
}

/// Subsets are stored sorted, without repeats, over task indices below n.
inline void validate_subset(const TaskSubset& s, std::size_t n) {
  require(!s.empty(), "subset must be nonempty");
  for (std::size_t i = 0; i < s.size(); ++i) {
    require(s[i] < n, "subset references unknown task index " + std::to_string(s[i]));
    require(i == 0 || s[i - 1] < s[i], "subset must be sorted without repeats");
  }
}

inline TaskSubset all_tasks(std::size_t n) {
  TaskSubset s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = i;
  return s;
}

// ---------------------------------------------------------------------------
// Scores

enum class Provenance { oracle, estimated };

/// f(S, t) for every subset S of a plan and every t in S.
struct ScoreTable {
  Provenance provenance = Provenance::estimated;
  std::vector<TaskSubset> subsets;
  std::map<std::pair<std::size_t, std::size_t>, double> entries;  // (subset index, task index)

  void set(std::size_t subset, std::size_t task, double score) {
    require(subset < subsets.size(), "score table: subset index out of range");
    require(std::binary_search(subsets[subset].begin(), subsets[subset].end(), task),
            "score table: task not in subset");
    entries[{subset, task}] = score;
  }

  double at(std::size_t subset, std::size_t task) const {
    auto it = entries.find({subset, task});
    require(it != entries.end(), "score table: missing entry");
    return it->second;
  }

  bool contains(std::size_t subset, std::size_t task) const {
    return entries.contains({subset, task});
  }

  friend bool operator==(const ScoreTable&, const ScoreTable&) = default;
};

// ---------------------------------------------------------------------------
// Forward / backward

namespace detail {

inline void check_input(const ModelParams& model, std::span<const double> x) {
  require(x.size() == model.spec.input_dim,
          "dimension mismatch: expected input of size " + std::to_string(model.spec.input_dim) +
              ", got " + std::to_string(x.size()));
  require(model.theta.size() == model.spec.parameter_count(), "model: parameter count mismatch");
}

/// Hidden pre-activations of an mlp1 model.
inline Vector hidden_pre(const ModelParams& m, std::span<const double> x) {
  const std::size_t q = m.spec.input_dim;
  const std::size_t h = m.spec.hidden_dim;
  const double* w1 = m.theta.data();
  const double* b1 = w1 + h * q;
  Vector pre(h);
  for (std::size_t j = 0; j < h; ++j) {
    double s = b1[j];
    for (std::size_t i = 0; i < q; ++i) s += w1[j * q + i] * x[i];
    pre[j] = s;
  }
  return pre;
}

}  // namespace detail

inline Vector forward_scores(const ModelParams& model, std::span<const double> x) {
  detail::check_input(model, x);
  const auto& spec = model.spec;
  const std::size_t out = spec.outputs();
  const std::size_t q = spec.input_dim;
  Vector scores(out);
  if (spec.kind == ArchKind::linear) {
    const double* w = model.theta.data();
    const double* b = w + out * q;
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < q; ++i) s += w[o * q + i] * x[i];
      scores[o] = s;
    }
    return scores;
  }
  const std::size_t h = spec.hidden_dim;
  Vector act = detail::hidden_pre(model, x);
  for (double& a : act) a = a > 0.0 ? a : 0.0;
  const double* w2 = model.theta.data() + h * q + h;
  const double* b2 = w2 + out * h;
  for (std::size_t o = 0; o < out; ++o) {
    double s = b2[o];
    for (std::size_t j = 0; j < h; ++j) s += w2[o * h + j] * act[j];
    scores[o] = s;
  }
  return scores;
}

/// Scalar output f_theta(x); only for single-output models.
inline double forward(const ModelParams& model, std::span<const double> x) {
  require(model.spec.outputs() == 1, "forward: model has several outputs, use forward_scores");
  return forward_scores(model, x)[0];
}

/// grad += scale * d(dout . f(x)) / d theta
inline void backprop(const ModelParams& model, std::span<const double> x,
                     std::span<const double> dout, std::span<double> grad, double scale = 1.0) {
  detail::check_input(model, x);
  const auto& spec = model.spec;
  const std::size_t out = spec.outputs();
  const std::size_t q = spec.input_dim;
  if (spec.kind == ArchKind::linear) {
    double* gw = grad.data();
    double* gb = gw + out * q;
    for (std::size_t o = 0; o < out; ++o) {
      const double d = scale * dout[o];
      if (d == 0.0) continue;
      for (std::size_t i = 0; i < q; ++i) gw[o * q + i] += d * x[i];
      gb[o] += d;
    }
    return;
  }
  const std::size_t h = spec.hidden_dim;
  const Vector pre = detail::hidden_pre(model, x);
  const double* w2 = model.theta.data() + h * q + h;
  double* gw1 = grad.data();
  double* gb1 = gw1 + h * q;
  double* gw2 = gb1 + h;
  double* gb2 = gw2 + out * h;
  for (std::size_t o = 0; o < out; ++o) {
    const double d = scale * dout[o];
    for (std::size_t j = 0; j < h; ++j)
      if (pre[j] > 0.0) gw2[o * h + j] += d * pre[j];
    gb2[o] += d;
  }
  for (std::size_t j = 0; j < h; ++j) {
    if (!(pre[j] > 0.0)) continue;
    double dh = 0.0;
    for (std::size_t o = 0; o < out; ++o) dh += scale * dout[o] * w2[o * h + j];
    if (dh == 0.0) continue;
    for (std::size_t i = 0; i < q; ++i) gw1[j * q + i] += dh * x[i];
    gb1[j] += dh;
  }
}

/// Gradient of output `output_index` with respect to all parameters.
inline Vector grad_output(const ModelParams& model, std::span<const double> x,
                          std::size_t output_index = 0) {
  require(output_index < model.spec.outputs(), "grad_output: output index out of range");
  Vector dout(model.spec.outputs(), 0.0);
  dout[output_index] = 1.0;
  Vector g(model.theta.size(), 0.0);
  backprop(model, x, dout, g);
  return g;
}

/// Scaled-uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer.
inline ModelParams init_model(const ArchitectureSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams m{spec, Vector(spec.parameter_count())};
  Rng rng(derive_seed(seed, "init"));
  auto fill = [&](std::size_t begin, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = begin; i < begin + count; ++i) m.theta[i] = rng.uniform(-bound, bound);
  };
  const std::size_t q = spec.input_dim;
  const std::size_t out = spec.outputs();
  if (spec.kind == ArchKind::linear) {
    fill(0, out * q + out, q);
  } else {
    const std::size_t h = spec.hidden_dim;
    fill(0, h * q + h, q);
    fill(h * q + h, out * h + out, h);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Losses and training

enum class Loss { logistic, squared };

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;  // 0 or >= sample count: full batch
  double learning_rate = 0.05;
  double momentum = 0.9;
  double l2_penalty = 0.0;
  std::uint64_t seed = 0;
  Loss loss = Loss::logistic;  // multiclass models always use softmax cross-entropy

  void validate() const {
    require(epochs >= 1, "train: epochs must be >= 1");
    require(learning_rate > 0.0, "train: learning_rate must be > 0");
    require(momentum >= 0.0 && momentum < 1.0, "train: momentum must be in [0, 1)");
    require(l2_penalty >= 0.0, "train: l2_penalty must be >= 0");
  }
};

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Loss of one sample given the model outputs; fills dL/dscores.
inline double output_loss(std::span<const double> scores, double y, const ArchitectureSpec& spec,
                          Loss loss, std::span<double> dscores) {
  if (spec.outputs() > 1) {
    const std::size_t label = static_cast<std::size_t>(y);
    require(label < scores.size(), "loss: class label out of range");
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < scores.size(); ++c)
      dscores[c] = std::exp(scores[c] - lse) - (c == label ? 1.0 : 0.0);
    return lse - scores[label];
  }
  const double f = scores[0];
  if (loss == Loss::squared) {
    dscores[0] = 2.0 * (f - y);
    return (f - y) * (f - y);
  }
  dscores[0] = -y * sigmoid(-y * f);
  return softplus(-y * f);
}

inline double mean_loss(const ModelParams& model, const SampleRefs& data, Loss loss = Loss::logistic) {
  require(!data.empty(), "mean_loss: empty data");
  Vector d(model.spec.outputs());
  double total = 0.0;
  for (const Sample* s : data) total += output_loss(forward_scores(model, s->x), s->y, model.spec, loss, d);
  return total / static_cast<double>(data.size());
}

/// Called after every parameter update; return false to stop training.
using TrainObserver = std::function<bool(const ModelParams&)>;

/// Mini-batch SGD with momentum. Deterministic given cfg.seed.
inline ModelParams train(const ModelParams& init, const SampleRefs& data, const TrainConfig& cfg,
                         const TrainObserver& observer = {}) {
  cfg.validate();
  require(!data.empty(), "train: empty training data");
  require(init.theta.size() == init.spec.parameter_count(), "train: parameter count mismatch");
  ModelParams model = init;
  const std::size_t n = data.size();
  const std::size_t p = model.theta.size();
  const std::size_t batch = (cfg.batch_size == 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(cfg.seed, "shuffle"));
  Vector velocity(p, 0.0);
  Vector grad(p);
  Vector dscores(model.spec.outputs());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const double inv = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const Sample& s = *data[order[k]];
        const Vector scores = forward_scores(model, s.x);
        batch_loss += output_loss(scores, s.y, model.spec, cfg.loss, dscores);
        backprop(model, s.x, dscores, grad, inv);
      }
      if (!std::isfinite(batch_loss))
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             " (learning rate " + std::to_string(cfg.learning_rate) + " too large?)");
      for (std::size_t i = 0; i < p; ++i) {
        const double g = grad[i] + 2.0 * cfg.l2_penalty * model.theta[i];
        velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * g;
        model.theta[i] += velocity[i];
      }
      if (observer && !observer(model)) return model;
    }
    for (double v : model.theta)
      if (!std::isfinite(v)) throw NumericalError("train: parameters diverged at epoch " + std::to_string(epoch));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Evaluation

enum class Metric { accuracy, macro_f1 };

/// Binary decision rule: a logit of exactly 0 predicts the negative class.
inline double predict_binary(double logit) { return logit > 0.0 ? 1.0 : -1.0; }

inline std::size_t predict_class(std::span<const double> scores) {
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

/// Accuracy or macro-F1 of predicted against true labels. Macro-F1 averages
/// over every label that occurs in either list.
inline double score_labels(std::span<const double> predicted, std::span<const double> truth, Metric metric) {
  require(!truth.empty(), "evaluate: empty split");
  require(predicted.size() == truth.size(), "evaluate: label count mismatch");
  if (metric == Metric::accuracy) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(truth.size());
  }
  std::set<double> labels(truth.begin(), truth.end());
  labels.insert(predicted.begin(), predicted.end());
  double total = 0.0;
  for (double label : labels) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool p = predicted[i] == label;
      const bool t = truth[i] == label;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    total += 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return total / static_cast<double>(labels.size());
}

/// Score of a binary predictor given its logits.
inline double score_logits(std::span<const double> logits, std::span<const double> truth, Metric metric) {
  Vector predicted(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) predicted[i] = predict_binary(logits[i]);
  return score_labels(predicted, truth, metric);
}

inline double evaluate(const ModelParams& model, const SampleRefs& samples, Metric metric = Metric::accuracy) {
  require(!samples.empty(), "evaluate: empty split");
  Vector predicted(samples.size());
  Vector truth(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vector scores = forward_scores(model, samples[i]->x);
    predicted[i] = model.spec.outputs() == 1 ? predict_binary(scores[0])
                                             : static_cast<double>(predict_class(scores));
    truth[i] = samples[i]->y;
  }
  return score_labels(predicted, truth, metric);
}

inline double evaluate(const ModelParams& model, const TaskCollection& tasks, std::size_t task,
                       SplitKind split, Metric metric = Metric::accuracy) {
  return evaluate(model, gather(tasks, {task}, split), metric);
}

}  // namespace gtae
