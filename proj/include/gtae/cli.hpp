// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 usage or input error,
// 2 numerical failure.

#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gtae/pipeline.hpp"

namespace gtae {

namespace cli_detail {

struct UsageError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> d, M, m, alpha, k;
  std::string mode, metric, out;
};

inline RunConfig load_config(const Globals& g) {
  RunConfig cfg;
  if (!g.config.empty()) cfg = parse_config(read_file(g.config));
  if (g.seed) cfg.seed = *g.seed;
  if (g.d) cfg.d = *g.d;
  if (g.M) cfg.M = *g.M;
  if (g.m) cfg.m = *g.m;
  if (g.alpha) cfg.alpha = *g.alpha;
  if (g.k) cfg.k = *g.k;
  if (!g.mode.empty()) set_config_value(cfg, "run.mode", g.mode);
  if (!g.metric.empty()) set_config_value(cfg, "run.metric", g.metric);
  cfg.validate();
  return cfg;
}

inline std::string out_dir(const Globals& g, const CLI::App* sub) {
  if (g.out.empty()) throw UsageError("--out DIR is required\n" + sub->help());
  std::filesystem::create_directories(g.out);
  return g.out;
}

inline TaskCollection load_tasks(const std::string& flag, const RunConfig& cfg, const CLI::App* sub) {
  const std::string path = flag.empty() ? cfg.tasks_path : flag;
  if (path.empty()) throw UsageError("--tasks FILE (or paths.tasks in the config) is required\n" + sub->help());
  return tasks_from_json(parse_json(read_file(path), path));
}

inline std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"gtae: gradient-based task affinity estimation and task grouping"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run configuration file");
  app.add_option("--seed", g.seed, "Root seed");
  app.add_option("--d", g.d, "Projected dimension (0: automatic)");
  app.add_option("--M", g.M, "Ensemble size");
  app.add_option("--m", g.m, "Number of sampled subsets");
  app.add_option("--alpha", g.alpha, "Subset size");
  app.add_option("--k", g.k, "Number of clusters");
  app.add_option("--mode", g.mode, "pairwise or higher-order");
  app.add_option("--metric", g.metric, "accuracy or macro-f1");
  app.add_option("--out", g.out, "Output directory");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a planted-cluster benchmark");
  SynthConfig sc;
  synth->add_option("--n", sc.n, "Number of tasks");
  synth->add_option("--k-true", sc.k_true, "Number of planted clusters");
  synth->add_option("--input-dim", sc.input_dim, "Feature dimension");
  synth->add_option("--train", sc.train, "Training samples per task");
  synth->add_option("--val", sc.val, "Validation samples per task");
  synth->add_option("--test", sc.test, "Test samples per task");
  synth->add_option("--noise", sc.teacher_noise, "Within-cluster teacher perturbation");
  synth->add_option("--flip", sc.flip, "Label flip rate");
  synth->add_option("--angle", sc.angle_deg, "Angle between cluster teachers in degrees");

  std::string tasks_flag;
  auto* meta = app.add_subcommand("meta-train", "Train the ensemble of meta-initializations");
  auto* extract = app.add_subcommand("extract", "Write projected gradient caches");
  auto* estimate = app.add_subcommand("estimate", "Estimate subset scores from gradients");
  auto* oracle = app.add_subcommand("oracle", "Compute subset scores by fine-tuning");
  auto* affinity = app.add_subcommand("affinity", "Assemble an affinity matrix from scores");
  auto* cluster = app.add_subcommand("cluster", "Cluster tasks from an affinity matrix");
  auto* group = app.add_subcommand("group", "Run the full grouping pipeline");
  auto* select = app.add_subcommand("select", "Greedy forward or backward task selection");
  auto* compare = app.add_subcommand("compare", "Compare an estimated affinity matrix to a reference");
  for (auto* s : {meta, extract, estimate, oracle, affinity, group, select})
    s->add_option("--tasks", tasks_flag, "Task collection JSON");

  std::string plan_flag, scores_flag;
  oracle->add_option("--plan", plan_flag, "Subset plan JSON (default: sample from the config)");
  affinity->add_option("--plan", plan_flag, "Subset plan JSON")->required();
  affinity->add_option("--scores", scores_flag, "Score table JSON")->required();

  std::string affinity_flag, method = "sdp";
  bool loss_mode = false;
  cluster->add_option("--affinity", affinity_flag, "Affinity CSV")->required();
  cluster->add_option("--method", method, "sdp, spectral, lloyd or exhaustive")
      ->check(CLI::IsMember({"sdp", "spectral", "lloyd", "exhaustive"}));
  cluster->add_flag("--loss-mode", loss_mode, "Treat entries as losses (lower is better)");

  std::string truth_flag;
  group->add_option("--truth", truth_flag, "Planted assignment JSON for the ARI");

  int target_id = 0;
  std::size_t rounds = 1;
  std::string direction = "forward", criterion = "target";
  select->add_option("--target", target_id, "Target task id")->required();
  select->add_option("--rounds", rounds, "Number of selection rounds");
  select->add_option("--direction", direction, "forward or backward")->check(CLI::IsMember({"forward", "backward"}));
  select->add_option("--criterion", criterion, "target or average")->check(CLI::IsMember({"target", "average"}));

  std::string estimated_flag, reference_flag, assignment_flag;
  compare->add_option("--estimated", estimated_flag, "Estimated affinity CSV")->required();
  compare->add_option("--oracle", reference_flag, "Reference affinity CSV")->required();
  compare->add_option("--assignment", assignment_flag, "Assignment JSON");
  compare->add_option("--truth", truth_flag, "Planted assignment JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      const std::string dir = out_dir(g, synth);
      if (g.seed) sc.seed = *g.seed;
      const SynthBenchmark b = generate(sc);
      write_text(join(dir, "tasks.json"), dump(to_json(b.tasks)));
      write_text(join(dir, "truth.json"), dump(to_json(b.truth, b.tasks.ids())));
      out << "wrote " << b.tasks.size() << " tasks to " << dir << "\n";
      return 0;
    }
    if (compare->parsed()) {
      const LabeledMatrix est = parse_matrix_csv(read_file(estimated_flag));
      const LabeledMatrix ref = parse_matrix_csv(read_file(reference_flag));
      require(est.ids == ref.ids, "compare: the matrices list different task ids");
      Json j;
      const double distance = matrix_distance(est.values, ref.values);
      out << "Distance: " << format_double(distance) << "\n";
      j["distance"] = distance;
      if (est.ids.size() >= 3) {
        const SpearmanReport sp = per_task_spearman(est.values, ref.values);
        out << "Mean Spearman: " << (sp.mean ? format_double(*sp.mean) : std::string("undefined")) << "\n";
        j["mean_spearman"] = optional_json(sp.mean);
      }
      if (!assignment_flag.empty() && !truth_flag.empty()) {
        const Json ja = parse_json(read_file(assignment_flag), assignment_flag);
        const Json jt = parse_json(read_file(truth_flag), truth_flag);
        const auto ids = assignment_ids(jt);
        const double ari = adjusted_rand_index(assignment_from_json(ja, ids), assignment_from_json(jt, ids));
        out << "ARI: " << format_double(ari) << "\n";
        j["ari"] = ari;
      }
      if (!g.out.empty()) {
        std::filesystem::create_directories(g.out);
        write_text(join(g.out, "compare.json"), dump(j));
      }
      return 0;
    }
    if (cluster->parsed()) {
      const std::string dir = out_dir(g, cluster);
      RunConfig cfg = load_config(g);
      const LabeledMatrix lm = parse_matrix_csv(read_file(affinity_flag));
      Matrix t = lm.values;
      if (loss_mode || cfg.loss_mode)
        for (double& v : t.data()) v = -v;
      Json diag;
      ClusterAssignment a;
      if (method == "exhaustive") {
        const ExhaustiveResult r = exhaustive_best_partition(t, std::min(cfg.k, t.rows()));
        a = r.assignment;
        diag["density"] = r.value;
      } else {
        set_config_value(cfg, "cluster.method", method);
        const ClusteringOutcome c = cluster_matrix(t, cfg, nullptr);
        a = c.assignment;
        diag["density"] = avg_density(t, a);
        if (c.sdp)
          diag["sdp"] = {{"objective", c.sdp->objective},
                         {"iterations", c.sdp->iterations},
                         {"residuals",
                          {{"row_sum", c.sdp->residuals.row_sum},
                           {"trace", c.sdp->residuals.trace},
                           {"min_entry", c.sdp->residuals.min_entry},
                           {"min_eigenvalue", c.sdp->residuals.min_eigen}}}};
        if (c.rounding) diag["rounding"] = {{"c", c.rounding->c}, {"lambda", c.rounding->lambda}, {"exact_k", c.rounding->exact_k}};
      }
      diag["method"] = method;
      write_text(join(dir, "assignment.json"), dump(to_json(a, lm.ids)));
      write_text(join(dir, "cluster.json"), dump(diag));
      out << "wrote " << a.k() << " clusters to " << dir << "\n";
      return 0;
    }

    const RunConfig cfg = load_config(g);
    CLI::App* sub = app.get_subcommands().front();
    const std::string dir = out_dir(g, sub);
    const TaskCollection tasks = load_tasks(tasks_flag, cfg, sub);
    const auto ids = tasks.ids();

    if (meta->parsed()) {
      FlopsLedger ledger;
      const auto inits = prepare_meta_inits(tasks, cfg, dir, &ledger);
      out << "wrote " << inits.size() << " meta-initializations to " << dir << "\n";
      return 0;
    }
    if (extract->parsed()) {
      const Members members = prepare_members(tasks, cfg, dir, nullptr);
      out << "wrote " << members.features.size() << " gradient caches to " << dir << " (" << members.reused
          << " reused)\n";
      return 0;
    }
    if (estimate->parsed()) {
      FlopsLedger ledger;
      EstimationDiagnostics diag;
      const Members members = prepare_members(tasks, cfg, dir, &ledger);
      const SubsetPlan plan = make_plan(cfg, tasks.size());
      const ScoreTable scores = estimate_scores(tasks, plan, members.features, cfg.estimation(tasks), &ledger, &diag);
      write_text(join(dir, "plan.json"), dump(to_json(plan, ids)));
      write_text(join(dir, "scores.json"), dump(to_json(scores, ids)));
      write_text(join(dir, "estimate_flops.json"), dump(to_json(ledger)));
      out << "estimated " << scores.entries.size() << " scores (" << diag.non_converged.size()
          << " non-converged fits)\n";
      return 0;
    }
    if (oracle->parsed()) {
      FlopsLedger ledger;
      const SubsetPlan plan = plan_flag.empty() ? make_plan(cfg, tasks.size())
                                                : plan_from_json(parse_json(read_file(plan_flag), plan_flag), tasks);
      std::vector<ModelParams> inits;
      if (!cfg.oracle_from_scratch) inits = prepare_meta_inits(tasks, cfg, dir, &ledger);
      const ScoreTable scores = oracle_scores(tasks, plan.subsets, oracle_options(cfg, tasks, inits), &ledger);
      write_text(join(dir, "plan.json"), dump(to_json(plan, ids)));
      write_text(join(dir, "oracle_scores.json"), dump(to_json(scores, ids)));
      write_text(join(dir, "oracle_flops.json"), dump(to_json(ledger)));
      out << "computed " << scores.entries.size() << " oracle scores\n";
      return 0;
    }
    if (affinity->parsed()) {
      const SubsetPlan plan = plan_from_json(parse_json(read_file(plan_flag), plan_flag), tasks);
      const ScoreTable scores =
          score_table_from_json(parse_json(read_file(scores_flag), scores_flag), tasks, Provenance::estimated);
      require(scores.subsets == plan.subsets, "affinity: scores do not follow the plan");
      const AffinityMatrix a = assemble(scores, plan, cfg.mode);
      write_text(join(dir, "affinity.csv"), affinity_csv(a, ids));
      write_text(join(dir, "counts.csv"), counts_csv(a, ids));
      out << "wrote " << a.n() << "x" << a.n() << " affinity matrix (" << a.filled.size() << " uncovered cells)\n";
      return 0;
    }
    if (group->parsed()) {
      RunContext ctx;
      ctx.cache_dir = join(join(dir, "cache"), member_cache_key(cfg, tasks));
      const std::string truth_path = truth_flag.empty() ? cfg.truth_path : truth_flag;
      if (!truth_path.empty())
        ctx.truth = assignment_from_json(parse_json(read_file(truth_path), truth_path), ids);
      const RunReport r = run_gtg(cfg, tasks, ctx);
      write_text(join(dir, "report.json"), dump(to_json(r)));
      write_text(join(dir, "assignment.json"), dump(to_json(r.clustering.assignment, ids)));
      write_text(join(dir, "affinity.csv"), affinity_csv(r.affinity, ids));
      write_text(join(dir, "counts.csv"), counts_csv(r.affinity, ids));
      if (r.oracle_affinity) write_text(join(dir, "oracle_affinity.csv"), affinity_csv(*r.oracle_affinity, ids));
      write_text(join(dir, "config.ini"), serialize_config(cfg));
      write_text(join(dir, "timing.json"), dump(Json{{"wall_seconds", r.wall_seconds}}));
      out << "grouped " << tasks.size() << " tasks into " << r.clustering.assignment.k()
          << " clusters, mean score " << format_double(r.mean_score) << "\n";
      return 0;
    }
    if (select->parsed()) {
      const Members members = prepare_members(tasks, cfg, join(join(dir, "cache"), member_cache_key(cfg, tasks)), nullptr);
      const std::size_t target = tasks.index_of(target_id);
      const SelectionCriterion crit =
          criterion == "target" ? SelectionCriterion::target : SelectionCriterion::subset_average;
      const SelectionResult r = direction == "forward"
                                    ? forward_select(tasks, target, rounds, members.features, cfg.estimation(tasks), crit)
                                    : backward_select(tasks, target, rounds, members.features, cfg.estimation(tasks), crit);
      Json steps = Json::array();
      for (const auto& s : r.steps) steps.push_back({{"task", ids[s.task]}, {"score", s.score}});
      Json final_set = Json::array();
      for (std::size_t t : r.final_set) final_set.push_back(ids[t]);
      write_text(join(dir, "selection.json"),
                 dump(Json{{"direction", direction}, {"target", target_id}, {"steps", steps}, {"final_set", final_set}}));
      out << direction << " selection finished with " << r.final_set.size() << " tasks\n";
      return 0;
    }
    throw UsageError(app.help());
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gtae
