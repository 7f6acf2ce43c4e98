// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/core/types.hpp"

#include <array>
#include <utility>

#include "kevolve/core/error.hpp"

namespace kevolve {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::empty_island: return "empty-island";
    case ErrorCode::no_block: return "no-block";
    case ErrorCode::ambiguous_block: return "ambiguous-block";
    case ErrorCode::inverted_markers: return "inverted-markers";
    case ErrorCode::parent_block_malformed: return "parent-block-malformed";
    case ErrorCode::locked_region_violation: return "locked-region-violation";
    case ErrorCode::irreducible_prompt: return "irreducible-prompt";
    case ErrorCode::missing_template_field: return "missing-template-field";
    case ErrorCode::backend_unavailable: return "backend-unavailable";
    case ErrorCode::unknown_backend: return "unknown-backend";
    case ErrorCode::invalid_rule_table: return "invalid-rule-table";
    case ErrorCode::unknown_job: return "unknown-job";
    case ErrorCode::queue_full: return "queue-full";
    case ErrorCode::provider_error: return "provider-error";
    case ErrorCode::credential_missing: return "credential-missing";
    case ErrorCode::script_exhausted: return "script-exhausted";
    case ErrorCode::missing_artifact: return "missing-artifact";
    case ErrorCode::parent_invalid: return "parent-invalid";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::parse_error: return "parse-error";
  }
  return "unknown";
}

namespace {

constexpr std::array<std::pair<Stage, std::string_view>, 6> kStageNames{{
    {Stage::compile_error, "compile_error"},
    {Stage::runtime_error, "runtime_error"},
    {Stage::correctness_error, "correctness_error"},
    {Stage::hack_detected, "hack_detected"},
    {Stage::unstable_timing, "unstable_timing"},
    {Stage::passed, "passed"},
}};

constexpr std::array<std::pair<Difficulty, std::string_view>, 3> kDifficultyNames{{
    {Difficulty::easy, "easy"},
    {Difficulty::medium, "medium"},
    {Difficulty::hard, "hard"},
}};

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::invalid_argument, message);
}

}  // namespace

std::string_view to_string(Stage stage) {
  for (const auto& [s, name] : kStageNames)
    if (s == stage) return name;
  return "unknown";
}

Stage stage_from_string(std::string_view name) {
  for (const auto& [s, n] : kStageNames)
    if (n == name) return s;
  throw Error(ErrorCode::parse_error, "unknown stage '" + std::string(name) + "'");
}

bool is_error_stage(Stage stage) { return stage != Stage::passed; }

std::string_view to_string(Difficulty difficulty) {
  for (const auto& [d, name] : kDifficultyNames)
    if (d == difficulty) return name;
  return "unknown";
}

Difficulty difficulty_from_string(std::string_view name) {
  for (const auto& [d, n] : kDifficultyNames)
    if (n == name) return d;
  throw Error(ErrorCode::parse_error, "unknown difficulty '" + std::string(name) + "'");
}

void ToleranceConfig::validate() const {
  require(relative_tol >= 0.0 && absolute_tol >= 0.0, "tolerances must be >= 0");
  require(relative_tol > 0.0 || absolute_tol > 0.0, "tolerances must not both be zero");
}

void TimingConfig::validate() const {
  require(measure_count >= 2, "timing.measure_count must be >= 2");
  require(stability_threshold > 0.0 && stability_threshold < 1.0,
          "timing.stability_threshold must be in (0, 1)");
}

void BlockMarkers::validate() const {
  require(!start_marker.empty() && !end_marker.empty(), "block markers must be non-empty");
  require(start_marker != end_marker, "block markers must differ");
  require(start_marker.find(end_marker) == std::string::npos &&
              end_marker.find(start_marker) == std::string::npos,
          "one block marker must not contain the other");
}

void TaskSpec::validate() const {
  require(!task_id.empty(), "task_id must be non-empty");
  require(!reference_source.empty(), "reference_source must be non-empty");
  require(!backend_id.empty(), "backend_id must be non-empty");
  tolerance.validate();
  timing.validate();
  markers.validate();
  if (baseline_mode.kind == BaselineMode::Kind::fixed_baseline)
    require(baseline_mode.fixed_ns > 0.0, "fixed baseline must be positive");
}

void CandidateProgram::validate() const {
  require(!candidate_id.empty(), "candidate_id must be non-empty");
  if (generation == 0)
    require(!parent_id.has_value(), "generation-0 candidates have no parent");
  else
    require(parent_id.has_value(), "candidates past generation 0 need a parent");
  require(full_source.find(evolve_block) != std::string::npos,
          "evolve_block must be a substring of full_source");
}

void EvalResult::validate() const {
  require(!correct || compiled, "correct implies compiled");
  require(!hack_detected || stage == Stage::hack_detected, "hack implies stage hack_detected");
  require(speedup.has_value() == valid(), "speedup present iff compiled, correct and not hacked");
  if (speedup) require(*speedup > 0.0, "speedup must be positive");
}

void ScoreWeights::validate() const {
  require(compile_credit >= 0.0 && correct_credit >= 0.0 && speedup_weight >= 0.0,
          "score weights must be >= 0");
  require(speedup_cap > 1.0, "speedup_cap must exceed 1");
}

}  // namespace kevolve
