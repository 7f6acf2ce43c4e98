// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace kevolve {

using Clock = std::chrono::system_clock;
using Timestamp = std::chrono::time_point<Clock, std::chrono::nanoseconds>;

// First evaluation phase that failed, or passed.
enum class Stage {
  compile_error,
  runtime_error,
  correctness_error,
  hack_detected,
  unstable_timing,
  passed,
};

std::string_view to_string(Stage stage);
Stage stage_from_string(std::string_view name);
bool is_error_stage(Stage stage);

enum class Difficulty { easy, medium, hard };

std::string_view to_string(Difficulty difficulty);
Difficulty difficulty_from_string(std::string_view name);

struct ToleranceConfig {
  double relative_tol = 1e-3;
  double absolute_tol = 1e-3;

  void validate() const;
  bool operator==(const ToleranceConfig&) const = default;
};

struct TimingConfig {
  std::uint32_t warmup_count = 10;
  std::uint32_t measure_count = 100;
  double stability_threshold = 0.01;  // coefficient of variation
  std::uint32_t max_retry_rounds = 3;

  void validate() const;
  bool operator==(const TimingConfig&) const = default;
};

// Wall-clock caps per evaluation phase, in seconds.
struct PhaseTimeouts {
  double compile_s = 120.0;
  double correctness_s = 120.0;
  double timing_s = 300.0;

  bool operator==(const PhaseTimeouts&) const = default;
};

struct BaselineMode {
  enum class Kind { measure_reference, fixed_baseline };
  Kind kind = Kind::measure_reference;
  double fixed_ns = 0.0;

  static BaselineMode measure() { return {}; }
  static BaselineMode fixed(double ns) { return {Kind::fixed_baseline, ns}; }
  bool operator==(const BaselineMode&) const = default;
};

struct BlockMarkers {
  std::string start_marker = "# ================== EVOLVE-BLOCK-START ==================";
  std::string end_marker = "# =================== EVOLVE-BLOCK-END ===================";

  void validate() const;
  bool operator==(const BlockMarkers&) const = default;
};

struct TaskSpec {
  std::string task_id;
  std::string reference_source;
  std::string target_class_name;
  std::string backend_id = "simulated";
  nlohmann::json test_input_spec = nlohmann::json::object();
  ToleranceConfig tolerance;
  TimingConfig timing;
  PhaseTimeouts timeouts;
  std::optional<Difficulty> difficulty_level;
  BaselineMode baseline_mode;
  BlockMarkers markers;

  void validate() const;
  bool operator==(const TaskSpec&) const = default;
};

struct CandidateProgram {
  std::string candidate_id;
  std::string task_id;
  std::optional<std::string> parent_id;
  std::uint32_t generation = 0;
  std::uint32_t island = 0;
  std::string full_source;
  std::string evolve_block;
  std::string model_id;
  std::string prompt_hash;
  Timestamp created_at{};

  void validate() const;
  bool operator==(const CandidateProgram&) const = default;
};

// Durations are nanoseconds stored as doubles; sub-nanosecond synthetic
// runtimes are legal.
struct TimingStats {
  std::vector<double> raw_samples;
  std::size_t kept_count = 0;
  std::size_t dropped_count = 0;
  double trimmed_mean = 0.0;
  double std_dev = 0.0;
  double cv = 0.0;

  bool operator==(const TimingStats&) const = default;
};

struct EvalResult {
  std::string candidate_id;
  bool compiled = false;
  bool correct = false;
  bool hack_detected = false;
  Stage stage = Stage::compile_error;
  std::optional<TimingStats> candidate_timing;
  std::optional<TimingStats> baseline_timing;
  std::optional<double> speedup;
  double score = 0.0;
  std::string error_log;
  std::map<std::string, std::string> hardware_metadata;

  // compiled, correct and not hacked.
  bool valid() const { return compiled && correct && !hack_detected; }
  void validate() const;
  bool operator==(const EvalResult&) const = default;
};

struct ScoreWeights {
  double compile_credit = 1.0;
  double correct_credit = 1.0;
  double speedup_weight = 1.0;
  double speedup_cap = 100.0;

  void validate() const;
  bool operator==(const ScoreWeights&) const = default;
};

}  // namespace kevolve
