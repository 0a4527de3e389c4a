// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Offset logistic regression on projected gradient features. For a sample
// with projected gradient g~, label y and base output f0 the linearized logit
// is f0 + g~.w, so the loss is log(1 + exp(-y (f0 + g~.w))), which is the
// same as log(1 + exp(-y g~.w + b)) with b = -y f0.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gtae/error.hpp"
#include "gtae/linalg.hpp"
#include "gtae/linearize.hpp"
#include "gtae/models.hpp"
#include "gtae/sketch.hpp"

namespace gtae {

struct ProjectedSample {
  Vector g_tilde;
  double y = 0.0;  // +1/-1 for classification, real target for fit_regression
  double b = 0.0;
  double f0 = 0.0;
  std::size_t task = 0;
};

using ProjectedRefs = std::vector<const ProjectedSample*>;

/// Projects raw linearization features with P.
inline std::vector<ProjectedSample> project_features(const std::vector<RawFeatureRecord>& raw,
                                                     const ProjectionHandle& h) {
  std::vector<Vector> gs;
  gs.reserve(raw.size());
  for (const auto& r : raw) gs.push_back(r.g);
  std::vector<Vector> projected = project_all(h, gs);
  std::vector<ProjectedSample> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = {std::move(projected[i]), raw[i].y, raw[i].b, raw[i].f0, raw[i].task};
  return out;
}

inline ProjectedRefs refs(const std::vector<ProjectedSample>& samples) {
  ProjectedRefs out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(&s);
  return out;
}

struct FitOptions {
  double ridge = 1e-6;
  double tolerance = 1e-8;  // on the gradient norm
  std::size_t max_iterations = 200;
  Vector initial;  // starting point; empty means zero
};

struct RegressionSolution {
  Vector w_d;
  double final_loss = 0.0;  // objective including the ridge term
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

inline double linearized_logit(const ProjectedSample& s, std::span<const double> w) {
  return s.f0 + dot(s.g_tilde, w);
}

/// Mean logistic loss of the linearized model, without the ridge term.
inline double logistic_data_loss(const ProjectedRefs& samples, std::span<const double> w) {
  double total = 0.0;
  for (const auto* s : samples) total += softplus(-s->y * linearized_logit(*s, w));
  return total / static_cast<double>(samples.size());
}

inline double logistic_objective(const ProjectedRefs& samples, std::span<const double> w, double ridge) {
  return logistic_data_loss(samples, w) + ridge * dot(w, w);
}

namespace detail {

inline std::size_t common_dim(const ProjectedRefs& samples) {
  require(!samples.empty(), "fit: empty sample set");
  const std::size_t d = samples.front()->g_tilde.size();
  for (const auto* s : samples) require(s->g_tilde.size() == d, "fit: samples have different dimensions");
  return d;
}

/// Newton's method with Armijo backtracking on a smooth convex objective.
/// `eval` fills gradient and Hessian and returns the objective; `value`
/// returns only the objective.
template <typename Eval, typename Value>
RegressionSolution newton(std::size_t dim, const FitOptions& opts, Eval&& eval, Value&& value) {
  RegressionSolution sol;
  sol.w_d.assign(dim, 0.0);
  if (!opts.initial.empty()) {
    require(opts.initial.size() == dim, "fit: initial point has the wrong dimension");
    sol.w_d = opts.initial;
  }
  Vector grad(dim);
  Matrix hess(dim, dim);
  for (sol.iterations = 0;; ++sol.iterations) {
    const double f = eval(sol.w_d, grad, hess);
    if (!std::isfinite(f)) throw NumericalError("fit: non-finite loss");
    sol.final_loss = f;
    sol.grad_norm = norm2(grad);
    if (sol.grad_norm <= opts.tolerance) {
      sol.converged = true;
      return sol;
    }
    if (sol.iterations >= opts.max_iterations) return sol;

    Vector step;
    for (double damping = 0.0;; damping = damping == 0.0 ? 1e-12 : damping * 10.0) {
      Matrix l = hess;
      for (std::size_t i = 0; i < dim; ++i) l(i, i) += damping;
      if (cholesky_factor(l)) {
        step = cholesky_solve(l, grad);
        break;
      }
      if (damping > 1e12) throw NumericalError("fit: Hessian could not be factored");
    }
    for (double& s : step) s = -s;

    const double slope = dot(grad, step);
    double t = 1.0;
    Vector trial(dim);
    bool moved = false;
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      for (std::size_t i = 0; i < dim; ++i) trial[i] = sol.w_d[i] + t * step[i];
      const double ft = value(trial);
      if (std::isfinite(ft) && ft <= f + 1e-4 * t * slope + 4e-16 * std::abs(f)) {
        moved = true;
        break;
      }
    }
    if (!moved) return sol;  // no further progress in floating point
    sol.w_d = trial;
  }
}

}  // namespace detail

/// Minimizes mean log(1 + exp(-y (f0 + g~.w))) + ridge |w|^2 by Newton's
/// method. Stops at gradient norm <= tolerance; hitting the iteration cap
/// returns the iterate with converged = false.
inline RegressionSolution fit(const ProjectedRefs& samples, const FitOptions& opts = {}) {
  require(opts.ridge >= 0.0, "fit: ridge must be >= 0");
  const std::size_t d = detail::common_dim(samples);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  auto eval = [&](const Vector& w, Vector& grad, Matrix& hess) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(hess.data().begin(), hess.data().end(), 0.0);
    double loss = 0.0;
    for (const auto* s : samples) {
      const double margin = s->y * linearized_logit(*s, w);
      loss += softplus(-margin);
      const double sig = sigmoid(-margin);  // = 1 - sigma(margin)
      const double gcoef = -s->y * sig * inv_n;
      const double hcoef = sig * (1.0 - sig) * inv_n;
      const auto& g = s->g_tilde;
      for (std::size_t i = 0; i < d; ++i) {
        grad[i] += gcoef * g[i];
        if (hcoef == 0.0 || g[i] == 0.0) continue;
        const double hi = hcoef * g[i];
        for (std::size_t j = 0; j <= i; ++j) hess(i, j) += hi * g[j];
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      grad[i] += 2.0 * opts.ridge * w[i];
      hess(i, i) += 2.0 * opts.ridge;
      for (std::size_t j = 0; j < i; ++j) hess(j, i) = hess(i, j);
    }
    return loss * inv_n + opts.ridge * dot(w, w);
  };
  auto value = [&](const Vector& w) { return logistic_objective(samples, w, opts.ridge); };
  return detail::newton(d, opts, eval, value);
}

inline RegressionSolution fit(const ProjectedRefs& samples, double ridge) {
  FitOptions opts;
  opts.ridge = ridge;
  return fit(samples, opts);
}

/// Score of the linearized model on evaluation samples: logit f0 + g~.w,
/// decided and scored exactly like models::evaluate.
inline double estimated_score(std::span<const double> w, const ProjectedRefs& eval_samples,
                              Metric metric = Metric::accuracy) {
  require(!eval_samples.empty(), "estimated_score: empty evaluation set");
  Vector logits(eval_samples.size()), truth(eval_samples.size());
  for (std::size_t i = 0; i < eval_samples.size(); ++i) {
    require(eval_samples[i]->g_tilde.size() == w.size(), "estimated_score: dimension mismatch");
    logits[i] = linearized_logit(*eval_samples[i], w);
    truth[i] = eval_samples[i]->y;
  }
  return score_logits(logits, truth, metric);
}

inline double estimated_score(const RegressionSolution& sol, const ProjectedRefs& eval_samples,
                              Metric metric = Metric::accuracy) {
  return estimated_score(sol.w_d, eval_samples, metric);
}

// ---------------------------------------------------------------------------
// Multiclass: one weight vector per class, class score f0_c + g~_c . w_c.

struct MulticlassSample {
  std::vector<Vector> g_tilde;  // per class, each of length d
  Vector f0;                    // per class
  std::size_t label = 0;
  std::size_t task = 0;
};

struct MulticlassSolution {
  std::vector<Vector> w;  // per class
  double final_loss = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

inline std::vector<MulticlassSample> project_features(const std::vector<MulticlassRecord>& raw,
                                                      const ProjectionHandle& h) {
  std::vector<MulticlassSample> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back({project_all(h, r.g), r.f0, r.label, r.task});
  return out;
}

inline Vector multiclass_scores(const MulticlassSample& s, const std::vector<Vector>& w) {
  Vector z(s.f0);
  for (std::size_t c = 0; c < z.size(); ++c) z[c] += dot(s.g_tilde[c], w[c]);
  return z;
}

namespace detail {

inline std::vector<Vector> unflatten(std::span<const double> flat, std::size_t classes, std::size_t d) {
  std::vector<Vector> w(classes, Vector(d));
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < d; ++i) w[c][i] = flat[c * d + i];
  return w;
}

}  // namespace detail

/// Softmax cross-entropy of the linearized class scores plus ridge |W|^2.
/// Weights are flattened class-major. Fills `grad` when non-empty.
inline double multiclass_objective(const std::vector<MulticlassSample>& samples, std::span<const double> flat,
                                   double ridge, std::span<double> grad = {}) {
  require(!samples.empty(), "fit_multiclass: empty sample set");
  const std::size_t classes = samples.front().f0.size();
  const std::size_t d = samples.front().g_tilde.front().size();
  const auto w = detail::unflatten(flat, classes, d);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (const auto& s : samples) {
    const Vector z = multiclass_scores(s, w);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    loss += lse - z[s.label];
    if (grad.empty()) continue;
    for (std::size_t c = 0; c < classes; ++c) {
      const double coef = (std::exp(z[c] - lse) - (c == s.label ? 1.0 : 0.0)) * inv_n;
      axpy(coef, s.g_tilde[c], grad.subspan(c * d, d));
    }
  }
  if (!grad.empty()) axpy(2.0 * ridge, flat, grad);
  return loss * inv_n + ridge * dot(flat, flat);
}

inline MulticlassSolution fit_multiclass(const std::vector<MulticlassSample>& samples, const FitOptions& opts = {}) {
  require(!samples.empty(), "fit_multiclass: empty sample set");
  const std::size_t classes = samples.front().f0.size();
  require(classes >= 2, "fit_multiclass: need at least 2 classes");
  const std::size_t d = samples.front().g_tilde.front().size();
  for (const auto& s : samples) {
    require(s.f0.size() == classes && s.g_tilde.size() == classes, "fit_multiclass: class count mismatch");
    require(s.label < classes, "fit_multiclass: label out of range");
    for (const auto& g : s.g_tilde) require(g.size() == d, "fit_multiclass: dimension mismatch");
  }
  const std::size_t dim = classes * d;
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  auto eval = [&](const Vector& flat, Vector& grad, Matrix& hess) {
    const double f = multiclass_objective(samples, flat, opts.ridge, grad);
    std::fill(hess.data().begin(), hess.data().end(), 0.0);
    const auto w = detail::unflatten(flat, classes, d);
    Vector prob(classes);
    for (const auto& s : samples) {
      const Vector z = multiclass_scores(s, w);
      const double mx = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (std::size_t c = 0; c < classes; ++c) sum += (prob[c] = std::exp(z[c] - mx));
      for (double& p : prob) p /= sum;
      for (std::size_t a = 0; a < classes; ++a)
        for (std::size_t b = 0; b < classes; ++b) {
          const double coef = (prob[a] * ((a == b) ? 1.0 : 0.0) - prob[a] * prob[b]) * inv_n;
          if (coef == 0.0) continue;
          for (std::size_t i = 0; i < d; ++i) {
            const double gi = coef * s.g_tilde[a][i];
            if (gi == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) hess(a * d + i, b * d + j) += gi * s.g_tilde[b][j];
          }
        }
    }
    for (std::size_t i = 0; i < dim; ++i) hess(i, i) += 2.0 * opts.ridge;
    return f;
  };
  auto value = [&](const Vector& flat) { return multiclass_objective(samples, flat, opts.ridge); };
  const RegressionSolution flat = detail::newton(dim, opts, eval, value);
  return {detail::unflatten(flat.w_d, classes, d), flat.final_loss, flat.grad_norm, flat.iterations, flat.converged};
}

inline std::size_t predict_multiclass(const MulticlassSample& s, const MulticlassSolution& sol) {
  return predict_class(multiclass_scores(s, sol.w));
}

// ---------------------------------------------------------------------------
// Regression targets: closed-form ridge least squares on (g~, y - f0).

inline RegressionSolution fit_regression(const ProjectedRefs& samples, double ridge) {
  require(ridge >= 0.0, "fit_regression: ridge must be >= 0");
  const std::size_t d = detail::common_dim(samples);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  Matrix normal(d, d);
  Vector rhs(d, 0.0);
  for (const auto* s : samples) {
    const double r = s->y - s->f0;
    for (std::size_t i = 0; i < d; ++i) {
      rhs[i] += inv_n * r * s->g_tilde[i];
      for (std::size_t j = 0; j <= i; ++j) normal(i, j) += inv_n * s->g_tilde[i] * s->g_tilde[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    normal(i, i) += ridge;
    for (std::size_t j = 0; j < i; ++j) normal(j, i) = normal(i, j);
  }
  Matrix l = normal;
  if (!cholesky_factor(l))
    throw NumericalError("fit_regression: singular normal equations; use ridge > 0");
  RegressionSolution sol;
  sol.w_d = cholesky_solve(l, rhs);
  double loss = 0.0;
  Vector grad(d, 0.0);
  for (const auto* s : samples) {
    const double e = linearized_logit(*s, sol.w_d) - s->y;
    loss += e * e;
    axpy(2.0 * e * inv_n, s->g_tilde, grad);
  }
  axpy(2.0 * ridge, sol.w_d, grad);
  sol.final_loss = loss * inv_n + ridge * dot(sol.w_d, sol.w_d);
  sol.grad_norm = norm2(grad);
  sol.iterations = 1;
  sol.converged = true;
  return sol;
}

// ---------------------------------------------------------------------------
// Empirical check of the projection bound
//   L(W_S) <= min_W L(W) + 2 delta + 4 G D eps
// where L is the training loss of the actual model on the subset.

struct BoundTerms {
  double delta = 0.0;  // worst per-task mean |Taylor residual|
  double G = 0.0;      // max training-gradient norm
  double D = 0.0;      // search radius
  double eps = 0.0;    // realized inner-product distortion
};

struct BoundCertificate {
  BoundTerms terms;
  double lhs = 0.0;       // actual-model training loss at theta* + P w_d
  double min_loss = 0.0;  // minimal unprojected training loss
  double rhs = 0.0;
  bool satisfied = false;
};

/// Maximum parameter count for which the unprojected p-dimensional fit runs.
inline constexpr std::size_t kMaxUnprojectedDim = 4096;

inline double model_logistic_loss(const ModelParams& model, const SampleRefs& samples) {
  return mean_loss(model, samples, Loss::logistic);
}

/// Per-task mean |f_W - f0 - g.(W - theta*)|, worst task.
inline double taylor_abs_error(const ModelParams& theta_star, const ModelParams& w,
                               const std::vector<RawFeatureRecord>& raw, const SampleRefs& samples) {
  require(raw.size() == samples.size(), "bound: feature/sample count mismatch");
  Vector delta(w.theta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = w.theta[i] - theta_star.theta[i];
  std::map<std::size_t, std::pair<double, std::size_t>> per_task;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double res = forward(w, samples[i]->x) - raw[i].f0 - dot(raw[i].g, delta);
    auto& acc = per_task[raw[i].task];
    acc.first += std::abs(res);
    ++acc.second;
  }
  double worst = 0.0;
  for (const auto& [task, acc] : per_task) worst = std::max(worst, acc.first / static_cast<double>(acc.second));
  return worst;
}

/// Measures delta, G, D and eps for a subset. `u_star` is the unprojected
/// minimizer's offset W* - theta*; D is the larger of the two offsets' norms
/// times (1 + margin).
inline BoundTerms measure_bound_terms(const ModelParams& theta_star, const ProjectionHandle& h,
                                      const std::vector<RawFeatureRecord>& raw, const SampleRefs& samples,
                                      std::span<const double> w_d, std::span<const double> u_star,
                                      double margin = 0.01) {
  require(u_star.size() == theta_star.theta.size(), "bound: u* has the wrong length");
  const ModelParams lifted = lift(h, w_d, theta_star);
  ModelParams unprojected = theta_star;
  for (std::size_t i = 0; i < u_star.size(); ++i) unprojected.theta[i] += u_star[i];

  BoundTerms t;
  t.delta = std::max(taylor_abs_error(theta_star, lifted, raw, samples),
                     taylor_abs_error(theta_star, unprojected, raw, samples));
  for (const auto& r : raw) t.G = std::max(t.G, norm2(r.g));
  Vector pw = expand(h, w_d);
  t.D = std::max(norm2(pw), norm2(u_star)) * (1.0 + margin);

  const double un = norm2(u_star);
  if (un > 0.0) {
    const Vector pu = project(h, Vector(u_star.begin(), u_star.end()));
    for (const auto& r : raw) {
      const double gn = norm2(r.g);
      if (gn == 0.0) continue;
      const double exact = dot(r.g, u_star);
      const double sketched = dot(project(h, r.g), pu);
      t.eps = std::max(t.eps, std::abs(exact - sketched) / (gn * un));
    }
  }
  return t;
}

/// Fills lhs/rhs and the satisfied flag. The comparison allows 1e-12
/// relative roundoff so that the exact regime (delta = eps = 0) certifies.
inline BoundCertificate check_bound(const ModelParams& theta_star, const ProjectionHandle& h,
                                    const SampleRefs& samples, const RegressionSolution& solution,
                                    double unprojected_min_loss, const BoundTerms& terms) {
  require(terms.delta >= 0.0 && terms.G >= 0.0 && terms.D >= 0.0 && terms.eps >= 0.0,
          "bound: measured constants must be nonnegative");
  BoundCertificate c;
  c.terms = terms;
  c.lhs = model_logistic_loss(lift(h, solution.w_d, theta_star), samples);
  c.min_loss = unprojected_min_loss;
  c.rhs = unprojected_min_loss + 2.0 * terms.delta + 4.0 * terms.G * terms.D * terms.eps;
  c.satisfied = c.lhs <= c.rhs + 1e-12 * std::max(1.0, std::abs(c.rhs));
  return c;
}

/// End-to-end certificate for one subset: projected fit, unprojected
/// p-dimensional fit, measured constants, bound check.
inline BoundCertificate certify_subset(const ModelParams& theta_star, const ProjectionHandle& h,
                                       const SampleRefs& samples, const FitOptions& opts = {}) {
  const std::size_t p = theta_star.theta.size();
  if (p > kMaxUnprojectedDim)
    throw InvalidArgument("check_bound: p = " + std::to_string(p) + " is too large for the unprojected solve");
  std::vector<RawFeatureRecord> raw;
  raw.reserve(samples.size());
  for (const Sample* s : samples) raw.push_back(linearize_sample(theta_star, *s, 0));

  const auto projected = project_features(raw, h);
  const RegressionSolution sol = fit(refs(projected), opts);
  const auto full = project_features(raw, ProjectionHandle(p, p, 0, ProjectionMode::identity));
  const RegressionSolution unprojected = fit(refs(full), opts);
  const double min_loss = logistic_data_loss(refs(full), unprojected.w_d);

  const BoundTerms terms = measure_bound_terms(theta_star, h, raw, samples, sol.w_d, unprojected.w_d);
  return check_bound(theta_star, h, samples, sol, min_loss, terms);
}

}  // namespace gtae
