// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kevolve/core/types.hpp"
#include "kevolve/eval/eval_service.hpp"
#include "kevolve/evolve/controller.hpp"
#include "kevolve/llm/llm_client.hpp"

namespace kevolve {

inline constexpr int kReportSchemaVersion = 1;

struct MetricInput {
  bool correct = false;
  bool hack_detected = false;
  std::optional<double> speedup;
};

struct MetricsSummary {
  double corr = 0.0;                 // percent
  std::map<double, double> fast_p;   // threshold -> fraction
  double avg_amsr = 0.0;
  std::size_t task_count = 0;
};

void to_json(nlohmann::json& j, const MetricsSummary& v);

// corr = 100 * valid / n; fast_p = valid with speedup > p, over n;
// avg_amsr = mean of speedup for valid results with speedup >= 1, else 0.
MetricsSummary compute_metrics(const std::vector<MetricInput>& results,
                               const std::vector<double>& p_values = {0.0, 1.0, 2.0});

MetricInput metric_input(const EvalResult& eval);

// Best-scoring evolved child (earliest wins ties); the seed is the
// reference itself and never counts. Absent when nothing was accepted.
std::optional<std::pair<CandidateProgram, EvalResult>> best_evolved(const RunReport& report);

struct SuiteTask {
  std::string task_path;
  int level = 1;
  std::string mock_script;  // optional, per-task scripted provider
};

struct SuiteManifest {
  std::string name = "suite";
  std::vector<SuiteTask> tasks;
};

// {"name": ..., "tasks": [{"task": path, "level": n, "mock_script": path}]}
// with relative paths resolved against the manifest's directory.
SuiteManifest load_suite_manifest(const std::string& path);

struct SuiteTaskResult {
  std::string task_id;
  int level = 1;
  std::optional<std::string> best_candidate_id;
  std::optional<EvalResult> best_eval;
  std::string infrastructure_error;  // non-empty when the task aborted
  std::vector<CurvePoint> curve;
};

struct SuiteResult {
  std::string name;
  std::vector<SuiteTaskResult> tasks;  // manifest order
  std::map<int, MetricsSummary> per_level;
  MetricsSummary overall;
};

nlohmann::json suite_to_json(const SuiteResult& result);

using ProviderFactory = std::function<std::shared_ptr<Provider>(const SuiteTask&)>;

struct SuiteOptions {
  RunConfig run;
  std::size_t parallelism = 2;  // tasks run concurrently
  std::string output_dir;       // empty: nothing persisted
  std::string backend_id;       // overrides each task's backend when set
  std::vector<double> p_values = {0.0, 1.0, 2.0};
  RetryPolicy retry;
  EvolutionController::TimeSource now;
  PromptTemplates templates = PromptTemplates::defaults();
};

// One controller per task over the shared evaluator. Infrastructure
// failures are recorded per task and the suite carries on.
SuiteResult run_suite(const SuiteManifest& manifest, const SuiteOptions& options,
                      Evaluator& evaluator, const ProviderFactory& providers);

// Exit status: 0 every task has a valid candidate, 1 candidate-level
// failures only, 2 any infrastructure failure.
int suite_exit_code(const SuiteResult& result);

// <dir>/<task>.csv per curve and <dir>/curves.csv with a task_id column,
// grouped by task id then iteration.
void export_curves(const std::map<std::string, std::vector<CurvePoint>>& curves, const std::string& dir);

// Recomputes every score in a persisted report under new weights.
RunReport rescore(RunReport report, const ScoreWeights& weights);

// File-safe version of a task id.
std::string sanitize_id(std::string_view id);

}  // namespace kevolve
