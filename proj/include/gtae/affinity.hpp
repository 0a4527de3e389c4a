// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Gradient-based task affinity estimation: sample subsets, fit a projected
// logistic regression per subset and ensemble member, average the scores and
// assemble them into an affinity matrix.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gtae/error.hpp"
#include "gtae/flops.hpp"
#include "gtae/linalg.hpp"
#include "gtae/linearize.hpp"
#include "gtae/models.hpp"
#include "gtae/parallel.hpp"
#include "gtae/regression.hpp"
#include "gtae/rng.hpp"
#include "gtae/sketch.hpp"

namespace gtae {

// ---------------------------------------------------------------------------
// Subset plans

struct SubsetPlan {
  std::size_t n = 0;
  std::size_t alpha = 0;  // 0 for plans of mixed sizes
  std::uint64_t seed = 0;
  std::vector<TaskSubset> subsets;

  std::size_t m() const { return subsets.size(); }

  void validate() const {
    for (const auto& s : subsets) {
      validate_subset(s, n);
      require(alpha == 0 || s.size() == alpha, "subset plan: subset size differs from alpha");
    }
  }

  friend bool operator==(const SubsetPlan&, const SubsetPlan&) = default;
};

/// m independent uniform draws of alpha distinct tasks each. Draws are
/// independent of each other, so the same subset may appear twice.
inline SubsetPlan sample_subsets(std::size_t n, std::size_t m, std::size_t alpha, std::uint64_t seed) {
  require(m >= 1, "sample_subsets: m must be >= 1");
  require(alpha >= 1, "sample_subsets: alpha must be >= 1");
  require(alpha <= n, "sample_subsets: alpha = " + std::to_string(alpha) + " exceeds n = " + std::to_string(n));
  SubsetPlan plan{n, alpha, seed, {}};
  plan.subsets.reserve(m);
  Rng rng(derive_seed(seed, "subsets"));
  std::vector<std::size_t> pool = all_tasks(n);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t i = 0; i < alpha; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
    TaskSubset s(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(alpha));
    std::sort(s.begin(), s.end());
    plan.subsets.push_back(std::move(s));
  }
  return plan;
}

/// All singletons, then all pairs in lexicographic order.
inline SubsetPlan pairwise_plan(std::size_t n) {
  require(n >= 1, "pairwise_plan: n must be >= 1");
  SubsetPlan plan{n, 0, 0, {}};
  for (std::size_t i = 0; i < n; ++i) plan.subsets.push_back({i});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) plan.subsets.push_back({i, j});
  return plan;
}

// ---------------------------------------------------------------------------
// Ensemble members

struct EstimationConfig {
  std::size_t M = 1;
  std::size_t d = 0;  // 0: choose from eps
  double eps = 0.5;
  FitOptions fit;
  Metric metric = Metric::accuracy;
  std::uint64_t seed = 0;
  bool identity_projection = false;  // requires d == p (or d == 0)
  ArchitectureSpec arch;
  TrainConfig meta_train;

  void validate() const {
    require(M >= 1, "estimation: M must be >= 1");
    require(eps > 0.0 && eps <= 1.0, "estimation: eps must be in (0, 1]");
    require(fit.ridge >= 0.0, "estimation: ridge must be >= 0");
  }

  std::size_t resolved_dim(std::size_t p) const {
    if (identity_projection) {
      require(d == 0 || d == p, "estimation: identity projection needs d == p");
      return p;
    }
    return d == 0 ? choose_dim(p, eps) : std::min(d, p);
  }
};

inline std::uint64_t meta_init_seed(std::uint64_t root, std::size_t member) {
  return derive_seed(root, "meta-init", member);
}

inline std::uint64_t projection_seed(std::uint64_t root, std::size_t member) {
  return derive_seed(root, "projection", member);
}

/// Trains one meta-initialization on all tasks' training data.
inline ModelParams train_meta_init(const TaskCollection& tasks, const ArchitectureSpec& arch, const TrainConfig& cfg,
                                   std::uint64_t root_seed, std::size_t member, FlopsLedger* ledger = nullptr) {
  const std::uint64_t seed = meta_init_seed(root_seed, member);
  TrainConfig c = cfg;
  c.seed = derive_seed(seed, "train");
  const SampleRefs data = gather(tasks, all_tasks(tasks.size()), SplitKind::train);
  ModelParams model = train(init_model(arch, derive_seed(seed, "params")), data, c);
  if (ledger) {
    Workload w;
    w.arch = arch;
    w.samples = data.size();
    w.epochs = c.epochs;
    w.batch_size = c.batch_size;
    ledger->add(Phase::meta_training, flops_for(Phase::meta_training, w));
  }
  return model;
}

inline std::vector<ModelParams> train_meta_inits(const TaskCollection& tasks, const EstimationConfig& cfg,
                                                 FlopsLedger* ledger = nullptr) {
  std::vector<ModelParams> out(cfg.M);
  std::vector<FlopsLedger> costs(cfg.M);
  parallel_for(cfg.M, [&](std::size_t k) {
    out[k] = train_meta_init(tasks, cfg.arch, cfg.meta_train, cfg.seed, k, &costs[k]);
  });
  if (ledger)
    for (const auto& c : costs) ledger->merge(c);
  return out;
}

/// Projected features of one member, extracted once and shared by every fit.
struct MemberFeatures {
  ProjectionHandle projection;
  std::vector<ProjectedSample> train;  // ordered by task index
  std::vector<ProjectedSample> test;
};

inline void record_feature_flops(const ArchitectureSpec& arch, std::size_t samples, std::size_t d,
                                 FlopsLedger* ledger) {
  if (!ledger) return;
  Workload w;
  w.arch = arch;
  w.samples = samples;
  w.d = d;
  ledger->add(Phase::gradient_extraction, flops_for(Phase::gradient_extraction, w));
  ledger->add(Phase::projection, flops_for(Phase::projection, w));
}

inline MemberFeatures build_member_features(const ModelParams& theta_star, const TaskCollection& tasks,
                                            const EstimationConfig& cfg, std::size_t member,
                                            FlopsLedger* ledger = nullptr) {
  const std::size_t p = theta_star.theta.size();
  const std::size_t d = cfg.resolved_dim(p);
  const std::uint64_t seed = projection_seed(cfg.seed, member);
  MemberFeatures f;
  f.projection = cfg.identity_projection ? ProjectionHandle(p, p, seed, ProjectionMode::identity)
                                         : ProjectionHandle::gaussian(p, d, seed);
  f.train = project_features(extract_features(theta_star, tasks, SplitKind::train), f.projection);
  f.test = project_features(extract_features(theta_star, tasks, SplitKind::test), f.projection);
  record_feature_flops(theta_star.spec, f.train.size() + f.test.size(), d, ledger);
  return f;
}

// ---------------------------------------------------------------------------
// Estimation

struct EstimationDiagnostics {
  std::size_t fits = 0;
  std::vector<std::pair<std::size_t, std::size_t>> non_converged;  // (member, subset)
};

namespace detail {

inline std::vector<ProjectedRefs> by_task(const std::vector<ProjectedSample>& samples, std::size_t n) {
  std::vector<ProjectedRefs> out(n);
  for (const auto& s : samples) {
    require(s.task < n, "features reference an unknown task");
    out[s.task].push_back(&s);
  }
  return out;
}

}  // namespace detail

/// Scores every (subset, task in subset) pair with each member's features and
/// averages the scores over members.
inline ScoreTable estimate_scores(const TaskCollection& tasks, const SubsetPlan& plan,
                                  const std::vector<MemberFeatures>& members, const EstimationConfig& cfg,
                                  FlopsLedger* ledger = nullptr, EstimationDiagnostics* diag = nullptr) {
  cfg.validate();
  require(!members.empty(), "estimate_scores: no ensemble members");
  require(plan.n == tasks.size(), "estimate_scores: plan is for a different number of tasks");
  plan.validate();
  const std::size_t n = tasks.size();
  const std::size_t M = members.size();
  const std::size_t m = plan.m();

  std::vector<std::vector<ProjectedRefs>> train_by_task, test_by_task;
  for (const auto& f : members) {
    train_by_task.push_back(detail::by_task(f.train, n));
    test_by_task.push_back(detail::by_task(f.test, n));
  }

  std::vector<Vector> scores(M * m);
  std::vector<char> converged(M * m, 1);
  std::vector<std::uint64_t> cost(M * m, 0);
  parallel_for(M * m, [&](std::size_t job) {
    const std::size_t k = job / m;
    const std::size_t s = job % m;
    const TaskSubset& subset = plan.subsets[s];
    ProjectedRefs data;
    for (std::size_t t : subset)
      data.insert(data.end(), train_by_task[k][t].begin(), train_by_task[k][t].end());
    const RegressionSolution sol = fit(data, cfg.fit);
    converged[job] = sol.converged;
    Vector out;
    std::uint64_t eval = 0;
    for (std::size_t t : subset) {
      out.push_back(estimated_score(sol, test_by_task[k][t], cfg.metric));
      eval += test_by_task[k][t].size();
    }
    scores[job] = std::move(out);
    Workload w;
    w.samples = data.size();
    w.d = members[k].projection.d();
    w.iterations = sol.iterations + 1;
    w.eval_samples = eval;
    cost[job] = flops_for(Phase::regression, w);
  });

  ScoreTable table;
  table.provenance = Provenance::estimated;
  table.subsets = plan.subsets;
  for (std::size_t s = 0; s < m; ++s)
    for (std::size_t pos = 0; pos < plan.subsets[s].size(); ++pos) {
      double mean = 0.0;
      for (std::size_t k = 0; k < M; ++k) mean += scores[k * m + s][pos];
      table.set(s, plan.subsets[s][pos], mean / static_cast<double>(M));
    }
  if (ledger)
    for (auto c : cost) ledger->add(Phase::regression, c);
  if (diag) {
    diag->fits += M * m;
    for (std::size_t job = 0; job < M * m; ++job)
      if (!converged[job]) diag->non_converged.emplace_back(job / m, job % m);
  }
  return table;
}

/// Meta-training, feature extraction and estimation in one call.
inline ScoreTable estimate_scores(const TaskCollection& tasks, const SubsetPlan& plan, const EstimationConfig& cfg,
                                  FlopsLedger* ledger = nullptr, EstimationDiagnostics* diag = nullptr) {
  cfg.validate();
  const auto inits = train_meta_inits(tasks, cfg, ledger);
  std::vector<MemberFeatures> members;
  for (std::size_t k = 0; k < inits.size(); ++k)
    members.push_back(build_member_features(inits[k], tasks, cfg, k, ledger));
  return estimate_scores(tasks, plan, members, cfg, ledger, diag);
}

// ---------------------------------------------------------------------------
// Affinity matrices

enum class AffinityKind { pairwise, higher_order };

struct AffinityMatrix {
  AffinityKind kind = AffinityKind::higher_order;
  Provenance provenance = Provenance::estimated;
  Matrix values;
  std::vector<std::size_t> counts;  // row-major n x n
  std::vector<std::pair<std::size_t, std::size_t>> filled;  // cells without any covering subset

  std::size_t n() const { return values.rows(); }
  std::size_t count(std::size_t i, std::size_t j) const { return counts[i * n() + j]; }
};

/// T[i][i] = f({i}, i), T[i][j] = f({i, j}, i).
inline AffinityMatrix pairwise_matrix(const ScoreTable& scores, std::size_t n) {
  std::vector<std::optional<std::size_t>> single(n);
  std::vector<std::optional<std::size_t>> pair(n * n);
  for (std::size_t s = 0; s < scores.subsets.size(); ++s) {
    const auto& sub = scores.subsets[s];
    for (std::size_t t : sub) require(t < n, "pairwise_matrix: task index out of range");
    if (sub.size() == 1 && !single[sub[0]]) single[sub[0]] = s;
    if (sub.size() == 2 && !pair[sub[0] * n + sub[1]]) pair[sub[0] * n + sub[1]] = s;
  }
  AffinityMatrix a;
  a.kind = AffinityKind::pairwise;
  a.provenance = scores.provenance;
  a.values = Matrix(n, n);
  a.counts.assign(n * n, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto& idx = i == j ? single[i] : pair[std::min(i, j) * n + std::max(i, j)];
      if (!idx || !scores.contains(*idx, i))
        throw InvalidArgument("pairwise_matrix: missing score for task " + std::to_string(i) +
                              (i == j ? " alone" : " with task " + std::to_string(j)));
      a.values(i, j) = scores.at(*idx, i);
    }
  return a;
}

/// T[i][j] = mean of f(S, i) over plan subsets S containing i and j. Cells
/// never covered take T[i][i], or the mean diagonal when i itself was never
/// sampled, and are listed in `filled`.
inline AffinityMatrix higher_order_matrix(const ScoreTable& scores, const SubsetPlan& plan) {
  require(scores.subsets == plan.subsets, "higher_order_matrix: scores were computed for a different plan");
  const std::size_t n = plan.n;
  AffinityMatrix a;
  a.kind = AffinityKind::higher_order;
  a.provenance = scores.provenance;
  a.values = Matrix(n, n);
  a.counts.assign(n * n, 0);
  for (std::size_t s = 0; s < plan.m(); ++s) {
    const auto& sub = plan.subsets[s];
    for (std::size_t i : sub) {
      const double f = scores.at(s, i);
      for (std::size_t j : sub) {
        a.values(i, j) += f;
        ++a.counts[i * n + j];
      }
    }
  }
  double diag_sum = 0.0;
  std::size_t diag_count = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a.counts[i * n + j] > 0) {
        a.values(i, j) /= static_cast<double>(a.counts[i * n + j]);
        if (i == j) diag_sum += a.values(i, i), ++diag_count;
      }
  const double diag_mean = diag_count > 0 ? diag_sum / static_cast<double>(diag_count) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (a.counts[i * n + i] == 0) {
      a.values(i, i) = diag_mean;
      a.filled.emplace_back(i, i);
    }
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && a.counts[i * n + j] == 0) {
        a.values(i, j) = a.values(i, i);
        a.filled.emplace_back(i, j);
      }
  }
  std::sort(a.filled.begin(), a.filled.end());
  return a;
}

/// Negated copy, for score tables that hold losses rather than metrics.
inline AffinityMatrix negated(AffinityMatrix a) {
  for (double& v : a.values.data()) v = -v;
  return a;
}

/// |T - T*|_F^2 / |T*|_F^2.
inline double matrix_distance(const Matrix& t, const Matrix& t_star) {
  require(t.rows() == t_star.rows() && t.cols() == t_star.cols(), "matrix_distance: shape mismatch");
  const double base = frobenius_sq(t_star);
  require(base > 0.0, "matrix_distance: reference matrix has zero norm");
  double diff = 0.0;
  for (std::size_t i = 0; i < t.data().size(); ++i) {
    const double e = t.data()[i] - t_star.data()[i];
    diff += e * e;
  }
  return diff / base;
}

/// Ranks starting at 1; ties share their average rank.
inline Vector average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Vector ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman correlation: Pearson correlation of average ranks. Empty when
/// either side is constant.
inline std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "spearman: length mismatch");
  const Vector ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) ma += ra[i], mb += rb[i];
  ma /= n, mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

struct SpearmanReport {
  std::vector<std::optional<double>> per_task;
  std::optional<double> mean;  // over defined columns
};

/// Per column i: rank correlation between T[., i] and T*[., i].
inline SpearmanReport per_task_spearman(const Matrix& t, const Matrix& t_star) {
  require(t.rows() == t_star.rows() && t.cols() == t_star.cols() && t.rows() == t.cols(),
          "per_task_spearman: shape mismatch");
  const std::size_t n = t.rows();
  require(n >= 3, "per_task_spearman: needs at least 3 tasks");
  SpearmanReport r;
  double sum = 0.0;
  std::size_t defined = 0;
  Vector a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[j] = t(j, i), b[j] = t_star(j, i);
    r.per_task.push_back(spearman(a, b));
    if (r.per_task.back()) sum += *r.per_task.back(), ++defined;
  }
  if (defined > 0) r.mean = sum / static_cast<double>(defined);
  return r;
}

// ---------------------------------------------------------------------------
// CSV: header row of task ids, then one row per task.

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename Cell>
std::string matrix_csv(const std::vector<int>& ids, std::size_t n, Cell&& cell) {
  require(ids.size() == n, "csv: id count does not match matrix size");
  std::string out;
  for (std::size_t j = 0; j < n; ++j) out += (j ? "," : "") + std::to_string(ids[j]);
  out += '\n';
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out += (j ? "," : "") + cell(i, j);
    out += '\n';
  }
  return out;
}

inline std::string affinity_csv(const AffinityMatrix& a, const std::vector<int>& ids) {
  return matrix_csv(ids, a.n(), [&](std::size_t i, std::size_t j) { return format_double(a.values(i, j)); });
}

inline std::string counts_csv(const AffinityMatrix& a, const std::vector<int>& ids) {
  return matrix_csv(ids, a.n(), [&](std::size_t i, std::size_t j) { return std::to_string(a.count(i, j)); });
}

struct LabeledMatrix {
  std::vector<int> ids;
  Matrix values;
};

inline LabeledMatrix parse_matrix_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    return cells;
  };
  LabeledMatrix out;
  require(static_cast<bool>(std::getline(in, line)), "csv: empty input");
  try {
    for (const auto& c : split(line)) out.ids.push_back(std::stoi(c));
    const std::size_t n = out.ids.size();
    require(n >= 1, "csv: no task ids in header");
    out.values = Matrix(n, n);
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      require(row < n, "csv: more rows than task ids");
      const auto cells = split(line);
      require(cells.size() == n, "csv: row " + std::to_string(row) + " has the wrong number of cells");
      for (std::size_t j = 0; j < n; ++j) out.values(row, j) = std::stod(cells[j]);
      ++row;
    }
    require(row == n, "csv: fewer rows than task ids");
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const InvalidArgument*>(&e)) throw;
    throw InvalidArgument(std::string("csv: malformed number: ") + e.what());
  }
  return out;
}

}  // namespace gtae
