// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion. Set
// GTAE_ACCEPT=3,6 to run a subset; GTAE_WRITE_GOLDEN=1 rewrites the golden
// values measured by criterion 6.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "gtae/gtae.hpp"

using namespace gtae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool known = false;  // a documented failure that does not fail the suite
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

SynthBenchmark benchmark(std::size_t n, std::size_t k, std::uint64_t seed, std::size_t train = 100,
                         std::size_t test = 100, double flip = 0.02, std::size_t input_dim = 10) {
  SynthConfig cfg;
  cfg.n = n;
  cfg.k_true = k;
  cfg.input_dim = input_dim;
  cfg.train = train;
  cfg.val = 0;
  cfg.test = test;
  cfg.flip = flip;
  cfg.seed = seed;
  return generate(cfg);
}

/// Every partition of n items into exactly k blocks.
std::vector<ClusterAssignment> all_partitions(std::size_t n, std::size_t k) {
  std::vector<ClusterAssignment> out;
  std::vector<std::size_t> rgs(n, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t used) {
    if (pos == n) {
      if (used == k) out.push_back(ClusterAssignment::from_labels(rgs));
      return;
    }
    for (std::size_t l = 0; l <= used && l < k; ++l) {
      rgs[pos] = l;
      rec(pos + 1, std::max(used, l + 1));
    }
  };
  rec(0, 0);
  return out;
}

// ---------------------------------------------------------------------------

Matrix toy() {
  const double v[6][6] = {{7, 7, 6, 6, 5, 5},     {7, 7, 6, 6, 5, 5},     {6, 6, 20, 20, 19, 19},
                          {6, 6, 20, 20, 19, 19}, {5, 5, 19, 19, 20, 20}, {5, 5, 19, 19, 20, 20}};
  Matrix t(6, 6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) t(i, j) = v[i][j];
  return t;
}

const ClusterAssignment kToyBlocks(6, {{0, 1}, {2, 3}, {4, 5}});

bool merges_high_blocks(const ClusterAssignment& a) {
  const auto l = a.labels();
  return l[2] == l[3] && l[3] == l[4] && l[4] == l[5];
}

Outcome ac1() {
  const auto start = std::chrono::steady_clock::now();
  const auto sol = solve_sdp(toy(), 3);
  const auto rounded = round_solution(sol.x_hat, {3, {}});
  const bool sdp_ok = rounded.assignment == kToyBlocks;
  const bool spectral_ok = merges_high_blocks(spectral_baseline(toy(), 3, 0));
  const auto lloyd = lloyd_baseline(toy(), 3, 0);
  const bool lloyd_ok = merges_high_blocks(lloyd);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Outcome o;
  o.pass = sdp_ok && spectral_ok && lloyd_ok && secs < 1.0;
  o.detail = std::string("sdp ") + (sdp_ok ? "separates" : "misses") + " the blocks, spectral " +
             (spectral_ok ? "merges" : "does not merge") + ", lloyd " + (lloyd_ok ? "merges" : "does not merge") +
             " (lloyd labels";
  for (auto l : lloyd.labels()) o.detail += " " + std::to_string(l);
  o.detail += "), " + fmt(secs) + " s";
  // k-means on the rows of this matrix has a zero-cost optimum at the planted
  // blocks, so a converged Lloyd run cannot merge them.
  o.known = sdp_ok && spectral_ok && !lloyd_ok && secs < 1.0;
  return o;
}

Outcome ac2() {
  const auto r = exhaustive_best_partition(toy(), 3);
  Outcome o;
  o.pass = r.assignment == kToyBlocks && std::abs(r.value - 94.0 / 3.0) <= 1e-12;
  o.detail = "value " + fmt(r.value) + ", planted partition " + (r.assignment == kToyBlocks ? "yes" : "no");
  return o;
}

Outcome ac3() {
  const auto b = benchmark(6, 2, 1, 200, 200, 0.1, 8);
  RunConfig cfg;
  cfg.arch = ArchKind::linear;
  cfg.identity_projection = true;
  cfg.ridge = 1e-6;
  cfg.M = 1;
  cfg.m = 40;
  cfg.alpha = 3;
  cfg.finetune = TrainConfig{3000, 0, 0.5, 0.9, 0.0, 0, Loss::logistic};
  const Members members = prepare_members(b.tasks, cfg, "", nullptr);
  const SubsetPlan plan = make_plan(cfg, b.tasks.size());
  const ScoreTable est = estimate_scores(b.tasks, plan, members.features, cfg.estimation(b.tasks));
  const ScoreTable orc = oracle_scores(b.tasks, plan.subsets, oracle_options(cfg, b.tasks, members.inits));
  std::size_t entries = 0;
  double worst = 0.0;
  for (std::size_t s = 0; s < plan.m(); ++s)
    for (std::size_t t : plan.subsets[s]) {
      worst = std::max(worst, std::abs(est.at(s, t) - orc.at(s, t)));
      ++entries;
    }
  const double dist = matrix_distance(higher_order_matrix(est, plan).values, higher_order_matrix(orc, plan).values);
  Outcome o;
  o.pass = entries >= 100 && worst <= 0.01 && dist <= 1e-3;
  o.detail = std::to_string(entries) + " entries, max gap " + fmt(worst) + ", distance " + fmt(dist);
  return o;
}

double numeric_partial(ModelParams m, const Vector& x, std::size_t i, std::size_t out, double h) {
  const double orig = m.theta[i];
  m.theta[i] = orig + h;
  const double up = forward_scores(m, x)[out];
  m.theta[i] = orig - h;
  const double down = forward_scores(m, x)[out];
  return (up - down) / (2.0 * h);
}

Outcome ac4() {
  Rng rng(2026);
  std::size_t checked = 0, skipped = 0;
  double worst = 0.0;
  for (std::uint64_t draw = 0; checked < 100; ++draw) {
    const ArchKind kind = draw % 2 == 0 ? ArchKind::mlp1 : ArchKind::linear;
    const std::size_t classes = draw % 3 == 0 ? 3 : 2;
    const ArchitectureSpec spec{kind, 3 + rng.below(6), 2 + rng.below(8), classes};
    ModelParams m = init_model(spec, draw);
    for (double& v : m.theta) v += 0.5 * rng.gaussian();
    Vector x(spec.input_dim);
    for (double& v : x) v = rng.gaussian();
    if (kind == ArchKind::mlp1) {
      bool near_kink = false;
      for (double a : detail::hidden_pre(m, x)) near_kink |= std::abs(a) < 1e-4;
      if (near_kink) {
        ++skipped;
        continue;
      }
    }
    for (std::size_t out = 0; out < spec.outputs(); ++out) {
      const Vector g = grad_output(m, x, out);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double fd = numeric_partial(m, x, i, out, 1e-6);
        worst = std::max(worst, std::abs(g[i] - fd) / std::max(1.0, std::abs(g[i])));
      }
    }
    ++checked;
  }
  Outcome o;
  o.pass = worst <= 1e-5;
  o.detail = std::to_string(checked) + " pairs (" + std::to_string(skipped) + " near a ReLU kink redrawn), max rel error " +
             fmt(worst);
  return o;
}

Outcome ac5() {
  // Linear models: the expansion is exact.
  const auto lin_bench = benchmark(4, 2, 7, 50, 10);
  const auto lin_data = gather(lin_bench.tasks, all_tasks(4), SplitKind::train);
  const auto lin0 = init_model({ArchKind::linear, 10, 0, 2}, 1);
  const auto lin1 = train(lin0, lin_data, TrainConfig{});
  const double lin_rss = taylor_rss(lin0, lin1, lin_data);

  std::vector<double> targets;
  for (int i = 1; i <= 10; ++i) targets.push_back(0.01 * i);
  double mean_rho = 0.0;
  std::string per_seed;
  bool all_positive = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto b = benchmark(8, 2, 100 + seed);
    TrainConfig meta;
    meta.seed = seed;
    const auto anchor = train_meta_init(b.tasks, {ArchKind::mlp1, 10, 32, 2}, meta, seed, 0, nullptr);
    SweepOptions opts;
    opts.finetune.epochs = 100;
    opts.finetune.learning_rate = 0.05;
    opts.seed = seed;
    const auto reports = rss_sweep(anchor, b.tasks, 6, targets, opts);
    Vector dist, rss;
    for (const auto& r : reports) {
      dist.push_back(r.finetune_distance);
      rss.push_back(r.rss);
    }
    const double rho = dist.size() >= 3 ? spearman(dist, rss).value_or(0.0) : 0.0;
    all_positive &= rho > 0.0;
    mean_rho += rho / 5.0;
    per_seed += " " + fmt(rho) + "(" + std::to_string(reports.size()) + " bins)";
  }
  Outcome o;
  o.pass = lin_rss <= 1e-20 && all_positive;
  o.detail = "linear rss " + fmt(lin_rss) + ", mlp1 Spearman(distance, rss) per seed" + per_seed + ", mean " +
             fmt(mean_rho);
  return o;
}

struct TrendGrid {
  std::vector<std::size_t> ds{16, 64, 256}, Ms{1, 3, 5};
  std::vector<std::vector<double>> distance, spearman;
};

TrendGrid measure_trends() {
  TrendGrid g;
  g.distance.assign(3, std::vector<double>(3, 0.0));
  g.spearman.assign(3, std::vector<double>(3, 0.0));
  const int seeds = 5;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto b = benchmark(20, 4, static_cast<std::uint64_t>(seed));
    RunConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.M = 5;
    cfg.m = 100;
    cfg.alpha = 4;
    cfg.ridge = 1e-2;
    const EstimationConfig base = cfg.estimation(b.tasks);
    const auto inits = train_meta_inits(b.tasks, base, nullptr);
    const SubsetPlan plan = make_plan(cfg, b.tasks.size());
    // One oracle per seed, fine-tuned from all five anchors.
    const auto oracle =
        higher_order_matrix(oracle_scores(b.tasks, plan.subsets, oracle_options(cfg, b.tasks, inits)), plan);
    for (std::size_t di = 0; di < 3; ++di) {
      EstimationConfig est = base;
      est.d = g.ds[di];
      std::vector<MemberFeatures> features;
      for (std::size_t k = 0; k < inits.size(); ++k)
        features.push_back(build_member_features(inits[k], b.tasks, est, k, nullptr));
      for (std::size_t mi = 0; mi < 3; ++mi) {
        est.M = g.Ms[mi];
        const std::vector<MemberFeatures> members(features.begin(), features.begin() + static_cast<long>(est.M));
        const auto a = higher_order_matrix(estimate_scores(b.tasks, plan, members, est), plan);
        g.distance[di][mi] += matrix_distance(a.values, oracle.values) / seeds;
        g.spearman[di][mi] += per_task_spearman(a.values, oracle.values).mean.value_or(0.0) / seeds;
      }
    }
  }
  return g;
}

Outcome ac6() {
  const TrendGrid g = measure_trends();
  bool monotone = true;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j + 1 < 3; ++j) {
      monotone &= g.distance[j + 1][i] <= g.distance[j][i];  // along d at fixed M
      monotone &= g.distance[i][j + 1] <= g.distance[i][j];  // along M at fixed d
    }
  const double gain = g.spearman[2][2] - g.spearman[0][0];

  Json measured = Json::object();
  measured["distance"] = g.distance;
  measured["spearman"] = g.spearman;
  if (std::getenv("GTAE_WRITE_GOLDEN")) {
    std::ofstream(GTAE_GOLDEN_FILE) << measured.dump(2) << "\n";
  }
  bool golden_ok = false;
  std::string golden_note = "golden file missing";
  if (fs::exists(GTAE_GOLDEN_FILE)) {
    const Json golden = parse_json(read_file(GTAE_GOLDEN_FILE), "golden");
    golden_ok = true;
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const double gd = golden["distance"][i][j].get<double>();
        const double gs = golden["spearman"][i][j].get<double>();
        golden_ok &= std::abs(g.distance[i][j] - gd) <= 0.05 * gd + 1e-5;
        golden_ok &= std::abs(g.spearman[i][j] - gs) <= 0.02;
        worst = std::max(worst, std::abs(g.distance[i][j] - gd) / gd);
      }
    golden_note = std::string("golden ") + (golden_ok ? "reproduced" : "drifted") + " (max distance drift " +
                  fmt(100.0 * worst) + "%)";
  }

  Outcome o;
  o.pass = monotone && gain > 0.0 && golden_ok;
  std::string grid;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      grid += " d" + std::to_string(g.ds[i]) + "/M" + std::to_string(g.Ms[j]) + "=" + fmt(g.distance[i][j]);
  o.detail = std::string("distance") + grid + "; monotone " + (monotone ? "yes" : "no") + "; Spearman " +
             fmt(g.spearman[0][0]) + " -> " + fmt(g.spearman[2][2]) + "; " + golden_note;
  return o;
}

Outcome ac7() {
  const auto b = benchmark(8, 2, 21, 60, 10);
  TrainConfig meta;
  meta.epochs = 20;
  const auto anchor = train_meta_init(b.tasks, {ArchKind::mlp1, 10, 16, 2}, meta, 21, 0, nullptr);
  const std::size_t p = anchor.theta.size();
  Rng rng(77);
  std::size_t satisfied = 0;
  double tightest = std::numeric_limits<double>::infinity();
  for (std::size_t trial = 0; trial < 50; ++trial) {
    TaskSubset subset = all_tasks(8);
    rng.shuffle(subset);
    subset.resize(1 + rng.below(8));
    std::sort(subset.begin(), subset.end());
    const std::size_t d = 8 + rng.below(57);
    const auto cert = certify_subset(anchor, ProjectionHandle::gaussian(p, d, 1000 + trial),
                                     gather(b.tasks, subset, SplitKind::train));
    satisfied += cert.satisfied;
    tightest = std::min(tightest, cert.rhs - cert.lhs);
  }
  Outcome o;
  o.pass = p <= 2000 && satisfied == 50;
  o.detail = "p = " + std::to_string(p) + ", " + std::to_string(satisfied) + "/50 subsets certified, min slack " +
             fmt(tightest);
  return o;
}

Outcome ac8() {
  Rng rng(8);
  std::size_t ok = 0;
  double worst_residual = 0.0, worst_gap = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6 + rng.below(3);
    const std::size_t k = 2 + rng.below(2);
    Matrix t(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) t(i, j) = t(j, i) = rng.uniform(-1.0, 1.0);
    const auto sol = solve_sdp(t, k);
    const double res = max_residual(sol.residuals);
    double gap = -std::numeric_limits<double>::infinity();
    for (const auto& a : all_partitions(n, k)) gap = std::max(gap, inner(t, lift_assignment(a)) - sol.objective);
    worst_residual = std::max(worst_residual, res);
    worst_gap = std::max(worst_gap, gap);
    ok += res <= 1e-6 && gap <= 1e-4;
  }
  Outcome o;
  o.pass = ok == 20;
  o.detail = std::to_string(ok) + "/20 instances, max residual " + fmt(worst_residual) +
             ", max partition excess " + fmt(worst_gap);
  return o;
}

Outcome ac9() {
  SynthConfig sc;
  sc.n = 12;
  sc.k_true = 3;
  sc.teacher_noise = 0.0;
  sc.flip = 0.02;
  sc.seed = 9;
  const auto b = generate(sc);
  RunConfig cfg;
  cfg.seed = 9;
  cfg.k = 3;
  RunContext ctx;
  ctx.truth = b.truth;
  const auto start = std::chrono::steady_clock::now();
  const RunReport r = run_gtg(cfg, b.tasks, ctx);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Outcome o;
  o.pass = r.ari && *r.ari == 1.0 && r.mean_score >= r.naive_mean_score && secs < 600.0;
  o.detail = "ARI " + fmt(r.ari.value_or(-1.0)) + ", grouped " + fmt(r.mean_score) + " vs naive " +
             fmt(r.naive_mean_score) + ", " + fmt(secs) + " s";
  return o;
}

Outcome ac10() {
  // Sketching pays off when p is well above d: p = 1537 here, d = 32.
  const auto b = benchmark(20, 4, 10);
  RunConfig cfg;
  cfg.seed = 10;
  cfg.M = 1;
  cfg.hidden_dim = 128;
  cfg.d = 32;
  bool cheaper = true, growing = true;
  double last = 0.0;
  std::string ratios;
  for (std::size_t m : {200u, 400u, 800u}) {
    cfg.m = m;
    FlopsLedger est_ledger, oracle_ledger;
    const Members members = prepare_members(b.tasks, cfg, "", &est_ledger);
    const SubsetPlan plan = make_plan(cfg, b.tasks.size());
    estimate_scores(b.tasks, plan, members.features, cfg.estimation(b.tasks), &est_ledger);
    // The oracle fine-tunes from the same anchors, so it pays for them too.
    oracle_ledger.add(Phase::meta_training, est_ledger[Phase::meta_training]);
    oracle_scores(b.tasks, plan.subsets, oracle_options(cfg, b.tasks, members.inits), &oracle_ledger);
    const double ratio = static_cast<double>(oracle_ledger.total()) / static_cast<double>(est_ledger.total());
    cheaper &= est_ledger.total() < oracle_ledger.total();
    growing &= ratio > last;
    last = ratio;
    ratios += " m" + std::to_string(m) + "=" + fmt(ratio);
  }
  Outcome o;
  o.pass = cheaper && growing;
  o.detail = "p = 1537, d = 32, oracle/estimate FLOP ratio" + ratios;
  return o;
}

// ---------------------------------------------------------------------------
// CLI determinism

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "timing.json") continue;
    files[fs::relative(e.path(), root).string()] = read_file(e.path().string());
  }
  return files;
}

/// Runs every subcommand in `root`; returns the failing command or "".
std::string run_all(const fs::path& root, const std::string& threads) {
  fs::remove_all(root);
  fs::create_directories(root / "stdout");
  const std::string d = root.string();
  write_text(d + "/quick.ini",
             "[model]\nhidden_dim = 4\n[meta_train]\nepochs = 5\n[finetune]\nepochs = 2\n"
             "[estimate]\nd = 8\nM = 2\n[subsets]\nm = 12\nalpha = 2\n[cluster]\nk = 2\n");
  const std::string g = "--config " + d + "/quick.ini --out " + d;
  const std::string tasks = " --tasks " + d + "/bench/tasks.json";
  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"synth", "--out " + d + "/bench --seed 5 synth --n 6 --k-true 2 --input-dim 4 --train 40 --val 0 --test 40"},
      {"meta", g + "/meta meta-train" + tasks},
      {"extract", g + "/extract extract" + tasks},
      {"estimate", g + "/est estimate" + tasks},
      {"oracle", g + "/orc oracle" + tasks + " --plan " + d + "/est/plan.json"},
      {"affinity", g + "/aff affinity" + tasks + " --plan " + d + "/est/plan.json --scores " + d + "/est/scores.json"},
      {"oaffinity",
       g + "/oaff affinity" + tasks + " --plan " + d + "/est/plan.json --scores " + d + "/orc/oracle_scores.json"},
      {"sdp", g + "/sdp cluster --affinity " + d + "/aff/affinity.csv --method sdp"},
      {"spectral", g + "/spectral cluster --affinity " + d + "/aff/affinity.csv --method spectral"},
      {"lloyd", g + "/lloyd cluster --affinity " + d + "/aff/affinity.csv --method lloyd"},
      {"exhaustive", g + "/exhaustive cluster --affinity " + d + "/aff/affinity.csv --method exhaustive"},
      {"group", g + "/group group" + tasks + " --truth " + d + "/bench/truth.json"},
      {"forward", g + "/fwd select" + tasks + " --target 1 --rounds 2"},
      {"backward", g + "/bwd select" + tasks + " --target 1 --rounds 2 --direction backward"},
      {"compare", "--out " + d + "/cmp compare --estimated " + d + "/aff/affinity.csv --oracle " + d +
                      "/oaff/affinity.csv --assignment " + d + "/sdp/assignment.json --truth " + d +
                      "/bench/truth.json"},
  };
  for (const auto& [name, args] : cmds) {
    const std::string line = "GTAE_THREADS=" + threads + " " + GTAE_CLI_PATH + " " + args + " > " + d + "/stdout/" +
                             name + ".txt 2> " + d + "/" + name + ".err";
    if (std::system(line.c_str()) != 0) return name;
  }
  return "";
}

Outcome ac11() {
  const fs::path root = fs::path(GTAE_TEST_TMP) / "acceptance_cli";
  Outcome o;
  const std::string first_fail = run_all(root, "1");
  if (!first_fail.empty()) {
    o.detail = "subcommand '" + first_fail + "' failed: " + read_file((root / (first_fail + ".err")).string());
    return o;
  }
  const auto first = snapshot(root);
  const std::string second_fail = run_all(root, "3");
  if (!second_fail.empty()) {
    o.detail = "subcommand '" + second_fail + "' failed on the rerun";
    return o;
  }
  const auto second = snapshot(root);
  std::vector<std::string> differing;
  for (const auto& [path, content] : first) {
    const auto it = second.find(path);
    if (it == second.end() || it->second != content) differing.push_back(path);
  }
  o.pass = differing.empty() && first.size() == second.size();
  o.detail = std::to_string(first.size()) + " output files compared";
  for (const auto& p : differing) o.detail += ", differs: " + p;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<int, Outcome (*)()>> criteria = {
      {1, ac1}, {2, ac2}, {3, ac3}, {4, ac4}, {5, ac5}, {6, ac6},
      {7, ac7}, {8, ac8}, {9, ac9}, {10, ac10}, {11, ac11}};
  std::set<int> only;
  if (const char* sel = std::getenv("GTAE_ACCEPT")) {
    std::stringstream s(sel);
    for (std::string tok; std::getline(s, tok, ',');) only.insert(std::stoi(tok));
  }
  bool unexpected = false;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "AC" << id << " " << (o.pass ? "PASS" : "FAIL") << " " << o.detail
              << (!o.pass && o.known ? " [known failure]" : "") << " [" << fmt(secs) << " s]" << std::endl;
    unexpected |= !o.pass && !o.known;
  }
  return unexpected ? 1 : 0;
}
