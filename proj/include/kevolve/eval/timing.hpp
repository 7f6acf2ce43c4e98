// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "kevolve/core/types.hpp"

namespace kevolve {

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double lower_fence = 0.0;
  double upper_fence = 0.0;
};

// Quartiles by linear interpolation between order statistics, h = (n-1)p,
// with Tukey fences at 1.5 * IQR.
Quartiles tukey_fences(std::span<const double> samples);

// Drops samples outside the Tukey fences, keeping at least the two samples
// closest to the median. Mean and sample standard deviation are taken over
// the survivors. Throws invalid_argument on fewer than 2 or non-positive
// samples.
TimingStats robust_stats(std::span<const double> samples);

enum class Stability { stable, unstable };

// Inclusive bound: cv == threshold is stable.
Stability check_stability(const TimingStats& stats, const TimingConfig& config);

}  // namespace kevolve
