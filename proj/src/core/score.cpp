// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/core/score.hpp"

#include <algorithm>

#include "kevolve/core/error.hpp"

namespace kevolve {

double compute_score(const ResultFlags& flags, std::optional<double> speedup,
                     const ScoreWeights& weights) {
  if (speedup.has_value() != flags.valid())
    throw Error(ErrorCode::invalid_argument,
                "speedup must be present exactly when the result is compiled, correct and not hacked");
  if (!flags.compiled) return 0.0;
  if (!flags.valid()) return weights.compile_credit;
  if (*speedup <= 0.0) throw Error(ErrorCode::invalid_argument, "speedup must be positive");
  return weights.compile_credit + weights.correct_credit +
         weights.speedup_weight * std::min(*speedup, weights.speedup_cap);
}

Stage classify_stage(const PhaseReport& report) {
  if (!report.compile_ok) return Stage::compile_error;
  if (!report.execution_ok) return Stage::runtime_error;
  if (!report.outputs_match) return Stage::correctness_error;
  if (!report.kernel_executed) return Stage::hack_detected;
  if (!report.timing_stable) return Stage::unstable_timing;
  return Stage::passed;
}

}  // namespace kevolve
