// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytic floating-point operation model. Counts are closed-form functions
// of the workload so that estimation and full-training costs can be compared
// without timing noise.
//
//   forward (per sample)   linear: out*(2q+1)
//                          mlp1:   h*(2q+1) + h + out*(2h+1)
//   forward+backward       3 * forward
//   SGD update (per step)  4p
//   projection             2pd per sample
//   Newton iteration       n_S*(d^2 + 4d + 8) + d^3/3 + 2d^2
//   projected evaluation   2d + 1 per sample
//   SDP iteration          40 n^3 + 10 n^2 (Jacobi sweeps + projections)

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "gtae/error.hpp"
#include "gtae/models.hpp"

namespace gtae {

enum class Phase {
  meta_training,
  gradient_extraction,
  projection,
  regression,
  sdp,
  oracle_training,
  final_training,
};

inline constexpr std::size_t kPhaseCount = 7;

inline constexpr std::array<std::string_view, kPhaseCount> kPhaseNames = {
    "meta_training", "gradient_extraction", "projection", "regression",
    "sdp",           "oracle_training",     "final_training"};

inline std::string_view to_string(Phase p) { return kPhaseNames[static_cast<std::size_t>(p)]; }

inline Phase phase_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kPhaseCount; ++i)
    if (kPhaseNames[i] == name) return static_cast<Phase>(i);
  throw InvalidArgument("unknown FLOPs phase '" + std::string(name) + "'");
}

/// Per-phase FLOP counters. Counters only grow.
class FlopsLedger {
 public:
  void add(Phase phase, std::uint64_t flops) { counters_[static_cast<std::size_t>(phase)] += flops; }

  void merge(const FlopsLedger& other) {
    for (std::size_t i = 0; i < kPhaseCount; ++i) counters_[i] += other.counters_[i];
  }

  std::uint64_t operator[](Phase phase) const { return counters_[static_cast<std::size_t>(phase)]; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counters_) t += c;
    return t;
  }

  const std::array<std::uint64_t, kPhaseCount>& counters() const { return counters_; }

  friend bool operator==(const FlopsLedger&, const FlopsLedger&) = default;

 private:
  std::array<std::uint64_t, kPhaseCount> counters_{};
};

struct Workload {
  ArchitectureSpec arch;
  std::uint64_t runs = 1;          // independent repetitions (members, subsets)
  std::uint64_t samples = 0;       // training samples per run
  std::uint64_t epochs = 0;
  std::uint64_t batch_size = 0;    // 0: full batch
  std::uint64_t eval_samples = 0;  // evaluation samples per run
  std::uint64_t d = 0;             // projected dimension
  std::uint64_t iterations = 0;    // Newton or SDP iterations per run
  std::uint64_t n = 0;             // SDP matrix size
};

inline std::uint64_t forward_flops(const ArchitectureSpec& a) {
  const std::uint64_t q = a.input_dim;
  const std::uint64_t out = a.outputs();
  if (a.kind == ArchKind::linear) return out * (2 * q + 1);
  const std::uint64_t h = a.hidden_dim;
  return h * (2 * q + 1) + h + out * (2 * h + 1);
}

inline std::uint64_t flops_for(Phase phase, const Workload& w) {
  const std::uint64_t fwd = forward_flops(w.arch);
  const std::uint64_t p = w.arch.parameter_count();
  switch (phase) {
    case Phase::meta_training:
    case Phase::oracle_training:
    case Phase::final_training: {
      const std::uint64_t batch = (w.batch_size == 0 || w.batch_size >= w.samples) ? w.samples : w.batch_size;
      const std::uint64_t steps = batch == 0 ? 0 : (w.samples + batch - 1) / batch;
      return w.runs * (w.epochs * (w.samples * 3 * fwd + steps * 4 * p) + w.eval_samples * fwd);
    }
    case Phase::gradient_extraction:
      return w.runs * w.samples * 3 * fwd;
    case Phase::projection:
      return w.runs * w.samples * 2 * p * w.d;
    case Phase::regression: {
      const std::uint64_t d = w.d;
      const std::uint64_t per_iter = w.samples * (d * d + 4 * d + 8) + d * d * d / 3 + 2 * d * d;
      return w.runs * (w.iterations * per_iter + w.eval_samples * (2 * d + 1));
    }
    case Phase::sdp:
      return w.runs * w.iterations * (40 * w.n * w.n * w.n + 10 * w.n * w.n);
  }
  throw InvalidArgument("unknown FLOPs phase");
}

}  // namespace gtae
