// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "kevolve/core/types.hpp"

namespace kevolve {

struct ResultFlags {
  bool compiled = false;
  bool correct = false;
  bool hack_detected = false;

  bool valid() const { return compiled && correct && !hack_detected; }
};

// Piecewise-linear program score:
//   0                                       if not compiled
//   compile_credit                          if compiled but incorrect or hacked
//   compile_credit + correct_credit
//     + speedup_weight * min(speedup, cap)  otherwise
// Throws invalid_argument when speedup presence disagrees with the flags.
double compute_score(const ResultFlags& flags, std::optional<double> speedup,
                     const ScoreWeights& weights = {});

// Outcome of a sandbox or simulated run, phase by phase. Later fields are
// meaningful only when the earlier ones succeeded.
struct PhaseReport {
  bool compile_ok = false;
  bool execution_ok = false;  // no fatal error or timeout while running
  bool outputs_match = false;
  bool kernel_executed = false;
  bool timing_stable = false;
};

Stage classify_stage(const PhaseReport& report);

}  // namespace kevolve
