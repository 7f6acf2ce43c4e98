// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/eval/timing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kevolve/core/error.hpp"

namespace kevolve {

namespace {

double interpolate(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Quartiles tukey_fences(std::span<const double> samples) {
  if (samples.empty()) throw Error(ErrorCode::invalid_argument, "quartiles of empty sample set");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  Quartiles q;
  q.q1 = interpolate(sorted, 0.25);
  q.median = interpolate(sorted, 0.5);
  q.q3 = interpolate(sorted, 0.75);
  const double iqr = q.q3 - q.q1;
  q.lower_fence = q.q1 - 1.5 * iqr;
  q.upper_fence = q.q3 + 1.5 * iqr;
  return q;
}

TimingStats robust_stats(std::span<const double> samples) {
  if (samples.size() < 2)
    throw Error(ErrorCode::invalid_argument, "robust_stats needs at least 2 samples");
  for (double s : samples)
    if (!(s > 0.0)) throw Error(ErrorCode::invalid_argument, "timing samples must be positive");

  const Quartiles q = tukey_fences(samples);
  std::vector<double> kept;
  kept.reserve(samples.size());
  for (double s : samples)
    if (s >= q.lower_fence && s <= q.upper_fence) kept.push_back(s);

  if (kept.size() < 2) {
    kept.assign(samples.begin(), samples.end());
    std::stable_sort(kept.begin(), kept.end(), [&](double a, double b) {
      return std::abs(a - q.median) < std::abs(b - q.median);
    });
    kept.resize(2);
  }

  TimingStats stats;
  stats.raw_samples.assign(samples.begin(), samples.end());
  stats.kept_count = kept.size();
  stats.dropped_count = samples.size() - kept.size();
  const double n = static_cast<double>(kept.size());
  stats.trimmed_mean = std::accumulate(kept.begin(), kept.end(), 0.0) / n;
  double ss = 0.0;
  for (double s : kept) ss += (s - stats.trimmed_mean) * (s - stats.trimmed_mean);
  stats.std_dev = std::sqrt(ss / (n - 1.0));
  stats.cv = stats.std_dev / stats.trimmed_mean;
  return stats;
}

Stability check_stability(const TimingStats& stats, const TimingConfig& config) {
  return stats.cv <= config.stability_threshold ? Stability::stable : Stability::unstable;
}

}  // namespace kevolve
