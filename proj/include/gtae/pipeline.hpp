// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end task grouping: meta-train, estimate affinities, cluster, train
// one model per group. Also greedy forward/backward task selection driven by
// the same estimates, and the run configuration format.
//
// Seed tree (all children of RunConfig::seed):
//   meta-init k      -> initialization and shuffling of member k
//   projection k     -> random projection of member k
//   plan             -> subset sampling
//   cluster          -> baseline restarts
//   group c          -> final model of cluster c
//   oracle           -> oracle fine-tuning

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gtae/affinity.hpp"
#include "gtae/cluster.hpp"
#include "gtae/error.hpp"
#include "gtae/flops.hpp"
#include "gtae/grad_cache.hpp"
#include "gtae/models.hpp"
#include "gtae/oracle.hpp"
#include "gtae/synth.hpp"
#include "gtae/task_io.hpp"

namespace gtae {

enum class AffinityMode { pairwise, higher_order };
enum class ClusterMethod { sdp, spectral, lloyd };

struct RunConfig {
  std::uint64_t seed = 0;
  AffinityMode mode = AffinityMode::higher_order;
  Metric metric = Metric::accuracy;
  bool loss_mode = false;  // negate T before clustering

  ArchKind arch = ArchKind::mlp1;
  std::size_t hidden_dim = 32;

  TrainConfig meta_train{30, 32, 0.05, 0.9, 0.0, 0, Loss::logistic};
  TrainConfig finetune{10, 32, 0.05, 0.9, 0.0, 0, Loss::logistic};

  std::size_t M = 1;
  std::size_t d = 0;  // 0: chosen from eps
  double eps = 0.5;
  double ridge = 1e-6;
  bool identity_projection = false;

  std::size_t m = 100;
  std::size_t alpha = 4;

  std::size_t k = 3;
  ClusterMethod method = ClusterMethod::sdp;
  std::vector<double> lambda_grid;  // empty: 1.00, 1.25, ..., 10.00

  bool oracle = false;
  bool oracle_from_scratch = false;

  std::string tasks_path;
  std::string truth_path;

  ArchitectureSpec architecture(const TaskCollection& tasks) const {
    ArchitectureSpec a;
    a.kind = arch;
    a.input_dim = tasks.input_dim;
    a.hidden_dim = arch == ArchKind::mlp1 ? hidden_dim : 0;
    a.num_classes = tasks.num_classes;
    return a;
  }

  EstimationConfig estimation(const TaskCollection& tasks) const {
    EstimationConfig e;
    e.M = M;
    e.d = d;
    e.eps = eps;
    e.fit.ridge = ridge;
    e.metric = metric;
    e.seed = seed;
    e.identity_projection = identity_projection;
    e.arch = architecture(tasks);
    e.meta_train = meta_train;
    return e;
  }

  void validate() const {
    require(M >= 1, "config: M must be >= 1");
    require(m >= 1, "config: m must be >= 1");
    require(alpha >= 1, "config: alpha must be >= 1");
    require(k >= 1, "config: k must be >= 1");
    require(eps > 0.0 && eps <= 1.0, "config: eps must be in (0, 1]");
    require(ridge >= 0.0, "config: ridge must be >= 0");
    require(arch == ArchKind::linear || hidden_dim >= 1, "config: hidden_dim must be >= 1");
    meta_train.validate();
    finetune.validate();
    for (double c : lambda_grid) require(c >= 1.0, "config: lambda grid values must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Config file: "key = value" lines under [section] headers, '#' comments.

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  require(!v.empty() && v.find_first_not_of("0123456789") == std::string::npos,
          "config: " + key + " expects a nonnegative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw InvalidArgument("config: " + key + " is out of range");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty() && std::isfinite(out), "config: " + key + " expects a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw InvalidArgument("config: " + key + " expects true or false, got '" + v + "'");
}

inline std::string real_text(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

inline void train_fields(std::vector<Field>& f, const std::string& section, TrainConfig& t) {
  auto name = [&](const char* k) { return section + "." + k; };
  f.push_back({section, "epochs", [&t] { return std::to_string(t.epochs); },
               [&t, n = name("epochs")](const std::string& v) { t.epochs = parse_uint(n, v); }});
  f.push_back({section, "batch_size", [&t] { return std::to_string(t.batch_size); },
               [&t, n = name("batch_size")](const std::string& v) { t.batch_size = parse_uint(n, v); }});
  f.push_back({section, "learning_rate", [&t] { return real_text(t.learning_rate); },
               [&t, n = name("learning_rate")](const std::string& v) { t.learning_rate = parse_real(n, v); }});
  f.push_back({section, "momentum", [&t] { return real_text(t.momentum); },
               [&t, n = name("momentum")](const std::string& v) { t.momentum = parse_real(n, v); }});
  f.push_back({section, "l2", [&t] { return real_text(t.l2_penalty); },
               [&t, n = name("l2")](const std::string& v) { t.l2_penalty = parse_real(n, v); }});
}

inline std::vector<Field> config_fields(RunConfig& c) {
  std::vector<Field> f;
  f.push_back({"run", "seed", [&c] { return std::to_string(c.seed); },
               [&c](const std::string& v) { c.seed = parse_uint("run.seed", v); }});
  f.push_back({"run", "mode", [&c] { return std::string(c.mode == AffinityMode::pairwise ? "pairwise" : "higher-order"); },
               [&c](const std::string& v) {
                 if (v == "pairwise") c.mode = AffinityMode::pairwise;
                 else if (v == "higher-order") c.mode = AffinityMode::higher_order;
                 else throw InvalidArgument("config: run.mode must be pairwise or higher-order, got '" + v + "'");
               }});
  f.push_back({"run", "metric", [&c] { return std::string(c.metric == Metric::accuracy ? "accuracy" : "macro-f1"); },
               [&c](const std::string& v) {
                 if (v == "accuracy") c.metric = Metric::accuracy;
                 else if (v == "macro-f1") c.metric = Metric::macro_f1;
                 else throw InvalidArgument("config: run.metric must be accuracy or macro-f1, got '" + v + "'");
               }});
  f.push_back({"run", "loss_mode", [&c] { return std::string(c.loss_mode ? "true" : "false"); },
               [&c](const std::string& v) { c.loss_mode = parse_bool("run.loss_mode", v); }});
  f.push_back({"model", "arch", [&c] { return to_string(c.arch); },
               [&c](const std::string& v) { c.arch = arch_from_string(v); }});
  f.push_back({"model", "hidden_dim", [&c] { return std::to_string(c.hidden_dim); },
               [&c](const std::string& v) { c.hidden_dim = parse_uint("model.hidden_dim", v); }});
  train_fields(f, "meta_train", c.meta_train);
  train_fields(f, "finetune", c.finetune);
  f.push_back({"estimate", "M", [&c] { return std::to_string(c.M); },
               [&c](const std::string& v) { c.M = parse_uint("estimate.M", v); }});
  f.push_back({"estimate", "d", [&c] { return std::to_string(c.d); },
               [&c](const std::string& v) { c.d = parse_uint("estimate.d", v); }});
  f.push_back({"estimate", "eps", [&c] { return real_text(c.eps); },
               [&c](const std::string& v) { c.eps = parse_real("estimate.eps", v); }});
  f.push_back({"estimate", "ridge", [&c] { return real_text(c.ridge); },
               [&c](const std::string& v) { c.ridge = parse_real("estimate.ridge", v); }});
  f.push_back({"estimate", "identity_projection", [&c] { return std::string(c.identity_projection ? "true" : "false"); },
               [&c](const std::string& v) { c.identity_projection = parse_bool("estimate.identity_projection", v); }});
  f.push_back({"subsets", "m", [&c] { return std::to_string(c.m); },
               [&c](const std::string& v) { c.m = parse_uint("subsets.m", v); }});
  f.push_back({"subsets", "alpha", [&c] { return std::to_string(c.alpha); },
               [&c](const std::string& v) { c.alpha = parse_uint("subsets.alpha", v); }});
  f.push_back({"cluster", "k", [&c] { return std::to_string(c.k); },
               [&c](const std::string& v) { c.k = parse_uint("cluster.k", v); }});
  f.push_back({"cluster", "method",
               [&c] {
                 return std::string(c.method == ClusterMethod::sdp ? "sdp"
                                    : c.method == ClusterMethod::spectral ? "spectral" : "lloyd");
               },
               [&c](const std::string& v) {
                 if (v == "sdp") c.method = ClusterMethod::sdp;
                 else if (v == "spectral") c.method = ClusterMethod::spectral;
                 else if (v == "lloyd") c.method = ClusterMethod::lloyd;
                 else throw InvalidArgument("config: cluster.method must be sdp, spectral or lloyd, got '" + v + "'");
               }});
  f.push_back({"cluster", "lambda_grid",
               [&c] {
                 std::string s;
                 for (double v : c.lambda_grid) s += (s.empty() ? "" : ",") + real_text(v);
                 return s;
               },
               [&c](const std::string& v) {
                 c.lambda_grid.clear();
                 std::stringstream ss(v);
                 std::string item;
                 while (std::getline(ss, item, ',')) c.lambda_grid.push_back(parse_real("cluster.lambda_grid", trim(item)));
               }});
  f.push_back({"oracle", "enabled", [&c] { return std::string(c.oracle ? "true" : "false"); },
               [&c](const std::string& v) { c.oracle = parse_bool("oracle.enabled", v); }});
  f.push_back({"oracle", "from_scratch", [&c] { return std::string(c.oracle_from_scratch ? "true" : "false"); },
               [&c](const std::string& v) { c.oracle_from_scratch = parse_bool("oracle.from_scratch", v); }});
  f.push_back({"paths", "tasks", [&c] { return c.tasks_path; }, [&c](const std::string& v) { c.tasks_path = v; }});
  f.push_back({"paths", "truth", [&c] { return c.truth_path; }, [&c](const std::string& v) { c.truth_path = v; }});
  return f;
}

}  // namespace detail

/// Applies one "section.key" override.
inline void set_config_value(RunConfig& cfg, const std::string& dotted, const std::string& value) {
  for (auto& f : detail::config_fields(cfg))
    if (f.section + "." + f.key == dotted) return f.set(value);
  throw InvalidArgument("config: unknown key '" + dotted + "'");
}

inline RunConfig parse_config(const std::string& text, RunConfig cfg = {}) {
  std::istringstream in(text);
  std::string line, section;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      require(line.back() == ']' && line.size() > 2, where + "malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, where + "expected key = value");
    require(!section.empty(), where + "key outside of any [section]");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, section + "." + key, value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(where + e.what());
    }
  }
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out, section;
  for (const auto& f : detail::config_fields(copy)) {
    if (f.section != section) {
      out += (out.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a(serialize_config(cfg))); }

/// Identifies cached meta-inits and features: everything they depend on.
inline std::string member_cache_key(const RunConfig& cfg, const TaskCollection& tasks) {
  std::ostringstream os;
  os << cfg.seed << '|' << to_string(cfg.arch) << '|' << cfg.hidden_dim << '|' << tasks.input_dim << '|'
     << tasks.size() << '|' << cfg.d << '|' << detail::real_text(cfg.eps) << '|' << cfg.identity_projection;
  const TrainConfig& t = cfg.meta_train;
  os << '|' << t.epochs << '|' << t.batch_size << '|' << detail::real_text(t.learning_rate) << '|'
     << detail::real_text(t.momentum) << '|' << detail::real_text(t.l2_penalty) << '|'
     << hex64(fnv1a(to_json(tasks).dump()));
  return hex64(fnv1a(os.str()));
}

// ---------------------------------------------------------------------------
// Member preparation with an optional on-disk cache

struct Members {
  std::vector<ModelParams> inits;
  std::vector<MemberFeatures> features;
  std::size_t reused = 0;  // members loaded from the cache
};

inline std::vector<ModelParams> prepare_meta_inits(const TaskCollection& tasks, const RunConfig& cfg,
                                                   const std::string& cache_dir, FlopsLedger* ledger) {
  const EstimationConfig est = cfg.estimation(tasks);
  std::vector<ModelParams> inits(cfg.M);
  std::vector<FlopsLedger> costs(cfg.M);
  parallel_for(cfg.M, [&](std::size_t k) {
    const std::string path = cache_dir.empty() ? "" : cache_dir + "/meta_init_" + std::to_string(k) + ".json";
    if (!path.empty() && std::filesystem::exists(path)) {
      inits[k] = model_from_json(parse_json(read_file(path), path));
      Workload w;
      w.arch = est.arch;
      w.samples = gather(tasks, all_tasks(tasks.size()), SplitKind::train).size();
      w.epochs = cfg.meta_train.epochs;
      w.batch_size = cfg.meta_train.batch_size;
      costs[k].add(Phase::meta_training, flops_for(Phase::meta_training, w));
      return;
    }
    inits[k] = train_meta_init(tasks, est.arch, cfg.meta_train, cfg.seed, k, &costs[k]);
    if (!path.empty()) write_text(path, dump(to_json(inits[k])));
  });
  if (ledger)
    for (const auto& c : costs) ledger->merge(c);
  return inits;
}

inline Members prepare_members(const TaskCollection& tasks, const RunConfig& cfg, const std::string& cache_dir,
                               FlopsLedger* ledger) {
  if (!cache_dir.empty()) std::filesystem::create_directories(cache_dir);
  const EstimationConfig est = cfg.estimation(tasks);
  Members out;
  out.inits = prepare_meta_inits(tasks, cfg, cache_dir, ledger);
  const auto ids = tasks.ids();
  for (std::size_t k = 0; k < cfg.M; ++k) {
    const std::string path = cache_dir.empty() ? "" : cache_dir + "/member_" + std::to_string(k) + ".gtae";
    const std::size_t p = out.inits[k].theta.size();
    if (!path.empty() && std::filesystem::exists(path)) {
      const std::string buf = read_file(path);
      const CacheHeader h = decode_cache_header(buf);
      if (h.p == p && h.d == est.resolved_dim(p) && h.seed == projection_seed(cfg.seed, k)) {
        out.features.push_back(decode_cache(buf, tasks));
        record_feature_flops(out.inits[k].spec, out.features.back().train.size() + out.features.back().test.size(),
                             h.d, ledger);
        ++out.reused;
        continue;
      }
    }
    out.features.push_back(build_member_features(out.inits[k], tasks, est, k, ledger));
    if (!path.empty()) write_cache(path, out.features.back(), ids);
  }
  return out;
}

inline SubsetPlan make_plan(const RunConfig& cfg, std::size_t n) {
  if (cfg.mode == AffinityMode::pairwise) return pairwise_plan(n);
  return sample_subsets(n, cfg.m, cfg.alpha, derive_seed(cfg.seed, "plan"));
}

inline AffinityMatrix assemble(const ScoreTable& scores, const SubsetPlan& plan, AffinityMode mode) {
  return mode == AffinityMode::pairwise ? pairwise_matrix(scores, plan.n) : higher_order_matrix(scores, plan);
}

inline OracleOptions oracle_options(const RunConfig& cfg, const TaskCollection& tasks,
                                    const std::vector<ModelParams>& inits) {
  OracleOptions o;
  if (!cfg.oracle_from_scratch) o.starts = inits;
  o.arch = cfg.architecture(tasks);
  o.scratch_runs = cfg.M;
  o.train = cfg.finetune;
  o.train.seed = derive_seed(cfg.seed, "oracle");
  o.metric = cfg.metric;
  return o;
}

// ---------------------------------------------------------------------------
// Grouping

struct ClusteringOutcome {
  ClusterAssignment assignment;
  std::optional<SdpSolution> sdp;
  std::optional<RoundingResult> rounding;
};

inline ClusteringOutcome cluster_matrix(const Matrix& t, const RunConfig& cfg, FlopsLedger* ledger) {
  const std::size_t k = std::min(cfg.k, t.rows());
  ClusteringOutcome out;
  switch (cfg.method) {
    case ClusterMethod::sdp: {
      out.sdp = solve_sdp(t, k, {}, ledger);
      out.rounding = round_solution(out.sdp->x_hat, {k, cfg.lambda_grid});
      out.assignment = out.rounding->assignment;
      break;
    }
    case ClusterMethod::spectral:
      out.assignment = spectral_baseline(t, k, derive_seed(cfg.seed, "cluster"));
      break;
    case ClusterMethod::lloyd:
      out.assignment = lloyd_baseline(t, k, derive_seed(cfg.seed, "cluster"));
      break;
  }
  return out;
}

/// Trains one model per cluster from scratch on the cluster's pooled training
/// data and scores each task with its own cluster's model.
inline Vector train_groups(const TaskCollection& tasks, const ClusterAssignment& a, const RunConfig& cfg,
                           FlopsLedger* ledger) {
  const ArchitectureSpec arch = cfg.architecture(tasks);
  Vector scores(tasks.size(), 0.0);
  std::vector<FlopsLedger> costs(a.k());
  parallel_for(a.k(), [&](std::size_t c) {
    const auto& members = a.clusters()[c];
    TrainConfig tc = cfg.meta_train;
    tc.seed = derive_seed(cfg.seed, "group-train", c);
    const SampleRefs data = gather(tasks, members, SplitKind::train);
    const ModelParams model = train(init_model(arch, derive_seed(cfg.seed, "group", c)), data, tc);
    std::uint64_t eval = 0;
    for (std::size_t t : members) {
      scores[t] = evaluate(model, tasks, t, SplitKind::test, cfg.metric);
      eval += tasks.tasks[t].test.size();
    }
    Workload w;
    w.arch = arch;
    w.samples = data.size();
    w.epochs = tc.epochs;
    w.batch_size = tc.batch_size;
    w.eval_samples = eval;
    costs[c].add(Phase::final_training, flops_for(Phase::final_training, w));
  });
  if (ledger)
    for (const auto& c : costs) ledger->merge(c);
  return scores;
}

struct RunReport {
  std::string config_hash;
  std::vector<int> ids;
  SubsetPlan plan;
  AffinityMatrix affinity;
  std::optional<AffinityMatrix> oracle_affinity;
  ClusteringOutcome clustering;
  Vector group_scores;  // per task, from its cluster's model
  double mean_score = 0.0;
  Vector naive_scores;  // per task, from the first meta-init (all tasks together)
  double naive_mean_score = 0.0;
  EstimationDiagnostics estimation;
  std::size_t reused_members = 0;
  std::optional<double> distance;
  std::optional<SpearmanReport> spearman;
  std::optional<double> ari;
  FlopsLedger flops;
  double wall_seconds = 0.0;  // not part of the JSON report
};

struct RunContext {
  std::string cache_dir;  // empty: no caching
  std::optional<ClusterAssignment> truth;
};

inline double mean_of(const Vector& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline RunReport run_gtg(const RunConfig& cfg, const TaskCollection& tasks, const RunContext& ctx = {}) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  tasks.validate();
  require(tasks.size() >= 2, "run: need at least two tasks");
  require(cfg.mode == AffinityMode::pairwise || cfg.alpha <= tasks.size(),
          "run: alpha = " + std::to_string(cfg.alpha) + " exceeds the number of tasks");
  RunReport r;
  r.config_hash = config_hash(cfg);
  r.ids = tasks.ids();

  const Members members = prepare_members(tasks, cfg, ctx.cache_dir, &r.flops);
  r.reused_members = members.reused;
  r.plan = make_plan(cfg, tasks.size());
  const EstimationConfig est = cfg.estimation(tasks);
  const ScoreTable scores = estimate_scores(tasks, r.plan, members.features, est, &r.flops, &r.estimation);
  r.affinity = assemble(scores, r.plan, cfg.mode);

  r.clustering = cluster_matrix(cfg.loss_mode ? negated(r.affinity).values : r.affinity.values, cfg, &r.flops);
  r.group_scores = train_groups(tasks, r.clustering.assignment, cfg, &r.flops);
  r.mean_score = mean_of(r.group_scores);
  for (std::size_t t = 0; t < tasks.size(); ++t)
    r.naive_scores.push_back(evaluate(members.inits[0], tasks, t, SplitKind::test, cfg.metric));
  r.naive_mean_score = mean_of(r.naive_scores);

  if (cfg.oracle) {
    const ScoreTable truth_scores =
        oracle_scores(tasks, r.plan.subsets, oracle_options(cfg, tasks, members.inits), &r.flops);
    r.oracle_affinity = assemble(truth_scores, r.plan, cfg.mode);
    r.distance = matrix_distance(r.affinity.values, r.oracle_affinity->values);
    if (tasks.size() >= 3) r.spearman = per_task_spearman(r.affinity.values, r.oracle_affinity->values);
  }
  if (ctx.truth) r.ari = adjusted_rand_index(r.clustering.assignment, *ctx.truth);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline Json to_json(const FlopsLedger& ledger) {
  Json j = Json::object();
  for (std::size_t i = 0; i < kPhaseCount; ++i) j[std::string(kPhaseNames[i])] = ledger.counters()[i];
  j["total"] = ledger.total();
  return j;
}

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json to_json(const RunReport& r) {
  Json j;
  j["config_hash"] = r.config_hash;
  j["tasks"] = r.ids.size();
  j["subsets"] = r.plan.m();
  Json scores = Json::object(), naive = Json::object();
  for (std::size_t t = 0; t < r.ids.size(); ++t) {
    scores[std::to_string(r.ids[t])] = r.group_scores[t];
    naive[std::to_string(r.ids[t])] = r.naive_scores[t];
  }
  j["task_scores"] = scores;
  j["mean_score"] = r.mean_score;
  j["naive_task_scores"] = naive;
  j["naive_mean_score"] = r.naive_mean_score;
  j["assignment"] = to_json(r.clustering.assignment, r.ids);
  if (r.clustering.sdp) {
    const auto& s = *r.clustering.sdp;
    j["sdp"] = {{"objective", s.objective},
                {"iterations", s.iterations},
                {"residuals",
                 {{"row_sum", s.residuals.row_sum},
                  {"trace", s.residuals.trace},
                  {"min_entry", s.residuals.min_entry},
                  {"min_eigenvalue", s.residuals.min_eigen}}}};
  }
  if (r.clustering.rounding)
    j["rounding"] = {{"c", r.clustering.rounding->c},
                     {"lambda", r.clustering.rounding->lambda},
                     {"exact_k", r.clustering.rounding->exact_k}};
  Json nc = Json::array();
  for (const auto& [member, subset] : r.estimation.non_converged) nc.push_back({member, subset});
  j["estimation"] = {{"fits", r.estimation.fits},
                     {"non_converged", nc},
                     {"uncovered_cells", r.affinity.filled.size()}};
  j["distance"] = optional_json(r.distance);
  if (r.spearman) {
    Json per = Json::array();
    for (const auto& v : r.spearman->per_task) per.push_back(optional_json(v));
    j["spearman"] = {{"mean", optional_json(r.spearman->mean)}, {"per_task", per}};
  } else {
    j["spearman"] = nullptr;
  }
  j["ari"] = optional_json(r.ari);
  j["flops"] = to_json(r.flops);
  return j;
}

// ---------------------------------------------------------------------------
// Greedy selection

enum class SelectionCriterion {
  target,          // the target task's estimated score
  subset_average,  // mean estimated score over the candidate's own tasks
};

/// Round candidates for forward selection: selected + {j} for every j not yet
/// selected, ascending in j. The first round gives all singletons.
inline std::vector<TaskSubset> forward_candidates(const std::vector<std::size_t>& selected, std::size_t n) {
  std::vector<TaskSubset> out;
  for (std::size_t j = 0; j < n; ++j) {
    if (std::find(selected.begin(), selected.end(), j) != selected.end()) continue;
    TaskSubset s(selected.begin(), selected.end());
    s.push_back(j);
    std::sort(s.begin(), s.end());
    out.push_back(std::move(s));
  }
  return out;
}

/// Round candidates for backward selection: current minus {j}, ascending in
/// j, skipping protected tasks.
inline std::vector<TaskSubset> backward_candidates(const TaskSubset& current, const std::vector<std::size_t>& keep) {
  std::vector<TaskSubset> out;
  for (std::size_t j : current) {
    if (std::find(keep.begin(), keep.end(), j) != keep.end()) continue;
    TaskSubset s;
    for (std::size_t t : current)
      if (t != j) s.push_back(t);
    out.push_back(std::move(s));
  }
  return out;
}

struct SelectionStep {
  std::size_t task = 0;  // added or removed
  double score = 0.0;
};

struct SelectionResult {
  std::vector<SelectionStep> steps;
  TaskSubset final_set;
};

/// Estimated score of each candidate: fit on the candidate's training data,
/// evaluate on the target (or the candidate's tasks), average over members.
inline Vector score_candidates(const std::vector<MemberFeatures>& members, std::size_t n,
                               const std::vector<TaskSubset>& candidates, std::size_t target,
                               SelectionCriterion criterion, const FitOptions& fit_opts, Metric metric) {
  std::vector<std::vector<ProjectedRefs>> train_by, test_by;
  for (const auto& f : members) {
    train_by.push_back(detail::by_task(f.train, n));
    test_by.push_back(detail::by_task(f.test, n));
  }
  const std::size_t M = members.size();
  std::vector<double> raw(M * candidates.size());
  parallel_for(raw.size(), [&](std::size_t job) {
    const std::size_t k = job / candidates.size();
    const TaskSubset& s = candidates[job % candidates.size()];
    ProjectedRefs data;
    for (std::size_t t : s) data.insert(data.end(), train_by[k][t].begin(), train_by[k][t].end());
    const RegressionSolution sol = fit(data, fit_opts);
    if (criterion == SelectionCriterion::target) {
      raw[job] = estimated_score(sol, test_by[k][target], metric);
    } else {
      double sum = 0.0;
      for (std::size_t t : s) sum += estimated_score(sol, test_by[k][t], metric);
      raw[job] = sum / static_cast<double>(s.size());
    }
  });
  Vector out(candidates.size(), 0.0);
  for (std::size_t job = 0; job < raw.size(); ++job) out[job % candidates.size()] += raw[job] / static_cast<double>(M);
  return out;
}

inline SelectionResult forward_select(const TaskCollection& tasks, std::size_t target, std::size_t rounds,
                                      const std::vector<MemberFeatures>& members, const EstimationConfig& cfg,
                                      SelectionCriterion criterion = SelectionCriterion::target) {
  const std::size_t n = tasks.size();
  require(target < n, "forward_select: target out of range");
  require(rounds <= n, "forward_select: rounds must be <= n");
  SelectionResult r;
  std::vector<std::size_t> selected;
  for (std::size_t round = 0; round < rounds; ++round) {
    const auto candidates = forward_candidates(selected, n);
    const Vector scores = score_candidates(members, n, candidates, target, criterion, cfg.fit, cfg.metric);
    std::size_t best = 0;
    for (std::size_t c = 1; c < candidates.size(); ++c)
      if (scores[c] > scores[best]) best = c;
    std::size_t added = 0;
    for (std::size_t t : candidates[best])
      if (std::find(selected.begin(), selected.end(), t) == selected.end()) added = t;
    selected.push_back(added);
    r.steps.push_back({added, scores[best]});
  }
  r.final_set = TaskSubset(selected.begin(), selected.end());
  std::sort(r.final_set.begin(), r.final_set.end());
  return r;
}

/// Starts from all tasks and removes one per round. In target mode the target
/// is never removed.
inline SelectionResult backward_select(const TaskCollection& tasks, std::size_t target, std::size_t rounds,
                                       const std::vector<MemberFeatures>& members, const EstimationConfig& cfg,
                                       SelectionCriterion criterion = SelectionCriterion::target) {
  const std::size_t n = tasks.size();
  require(target < n, "backward_select: target out of range");
  require(rounds < n, "backward_select: rounds must be < n");
  SelectionResult r;
  TaskSubset current = all_tasks(n);
  std::vector<std::size_t> keep;
  if (criterion == SelectionCriterion::target) keep.push_back(target);
  for (std::size_t round = 0; round < rounds; ++round) {
    const auto candidates = backward_candidates(current, keep);
    if (candidates.empty()) break;
    const Vector scores = score_candidates(members, n, candidates, target, criterion, cfg.fit, cfg.metric);
    std::size_t best = 0;
    for (std::size_t c = 1; c < candidates.size(); ++c)
      if (scores[c] > scores[best]) best = c;
    std::size_t removed = 0;
    for (std::size_t t : current)
      if (!std::binary_search(candidates[best].begin(), candidates[best].end(), t)) removed = t;
    current = candidates[best];
    r.steps.push_back({removed, scores[best]});
  }
  r.final_set = current;
  return r;
}

}  // namespace gtae
