// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// The multitask training oracle f(S, t): train on the pooled training data of
// S, evaluate every t in S on its test split.

#pragma once

#include <cstdint>
#include <vector>

#include "gtae/flops.hpp"
#include "gtae/models.hpp"
#include "gtae/parallel.hpp"
#include "gtae/rng.hpp"

namespace gtae {

struct OracleOptions {
  /// Fine-tune from each start and average the scores. Empty: train from
  /// scratch `scratch_runs` times with `arch`.
  std::vector<ModelParams> starts;
  ArchitectureSpec arch;
  std::size_t scratch_runs = 1;
  TrainConfig train;
  Metric metric = Metric::accuracy;
};

inline ScoreTable oracle_scores(const TaskCollection& tasks, const std::vector<TaskSubset>& subsets,
                                const OracleOptions& opts, FlopsLedger* ledger = nullptr) {
  const std::size_t runs = opts.starts.empty() ? opts.scratch_runs : opts.starts.size();
  require(runs >= 1, "oracle: need at least one run per subset");
  for (const auto& s : subsets) validate_subset(s, tasks.size());

  // scores[k][r][position in subset]
  std::vector<std::vector<Vector>> scores(subsets.size(), std::vector<Vector>(runs));
  std::vector<FlopsLedger> costs(subsets.size());
  parallel_for(subsets.size() * runs, [&](std::size_t job) {
    const std::size_t k = job / runs;
    const std::size_t r = job % runs;
    const TaskSubset& subset = subsets[k];
    TrainConfig cfg = opts.train;
    cfg.seed = derive_seed(opts.train.seed, "oracle", job);
    const ModelParams start =
        opts.starts.empty() ? init_model(opts.arch, derive_seed(opts.train.seed, "oracle-init", job))
                            : opts.starts[r];
    const SampleRefs data = gather(tasks, subset, SplitKind::train);
    const ModelParams model = train(start, data, cfg);
    Vector out;
    std::uint64_t eval = 0;
    for (std::size_t t : subset) {
      out.push_back(evaluate(model, tasks, t, SplitKind::test, opts.metric));
      eval += tasks.tasks[t].test.size();
    }
    scores[k][r] = std::move(out);
    if (r == 0) {
      Workload w;
      w.arch = start.spec;
      w.runs = runs;
      w.samples = data.size();
      w.epochs = cfg.epochs;
      w.batch_size = cfg.batch_size;
      w.eval_samples = eval;
      costs[k].add(Phase::oracle_training, flops_for(Phase::oracle_training, w));
    }
  });

  ScoreTable table;
  table.provenance = Provenance::oracle;
  table.subsets = subsets;
  for (std::size_t k = 0; k < subsets.size(); ++k) {
    for (std::size_t pos = 0; pos < subsets[k].size(); ++pos) {
      double mean = 0.0;
      for (std::size_t r = 0; r < runs; ++r) mean += scores[k][r][pos];
      table.set(k, subsets[k][pos], mean / static_cast<double>(runs));
    }
    if (ledger) ledger->merge(costs[k]);
  }
  return table;
}

}  // namespace gtae
