// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kevolve/archive/archive.hpp"
#include "kevolve/core/types.hpp"
#include "kevolve/eval/eval_service.hpp"
#include "kevolve/llm/llm_client.hpp"
#include "kevolve/prompt/prompt_engine.hpp"

namespace kevolve {

struct RunConfig {
  std::uint32_t iterations = 40;
  DecodingConfig decoding;
  ArchiveConfig archive;
  std::size_t input_token_cap = 32768;
  std::uint64_t seed = 0;  // seeds the archive sampler
  std::optional<double> stop_on_score;
  std::size_t previous_k = 3;  // previous attempts shown per prompt
  bool strict_locked_regions = false;
  std::string run_id = "run";

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& v);
void from_json(const nlohmann::json& j, RunConfig& v);

enum class RejectionReason {
  no_block,
  ambiguous_block,
  locked_region_violation,
  output_truncated,
  prompt_over_budget,
};

std::string_view to_string(RejectionReason reason);
RejectionReason rejection_from_string(std::string_view name);

// The parts of a CompletionRecord that are reproducible across replays.
struct GenerationRef {
  std::string prompt_hash;
  std::string model_id;
  std::uint32_t attempt = 0;
  bool output_truncated = false;
  TokenUsage usage;
  bool operator==(const GenerationRef&) const = default;
};

struct TrajectoryStep {
  std::uint32_t iteration = 0;
  std::uint32_t island = 0;
  std::string parent_id;
  std::vector<std::string> inspiration_ids;  // top programs in the prompt
  std::vector<std::string> previous_ids;     // previous attempts in the prompt
  std::string prompt_hash;
  std::optional<GenerationRef> generation_ref;  // absent when no call was made
  std::optional<CandidateProgram> child;
  std::optional<EvalResult> child_eval;
  std::optional<RejectionReason> rejection_reason;
  std::string rejection_detail;

  bool accepted() const { return child.has_value(); }
  bool operator==(const TrajectoryStep&) const = default;
};

struct CurvePoint {
  std::uint32_t iteration = 0;
  double best_score = 0.0;
  double best_speedup = 0.0;  // best passed-stage speedup so far, 0 if none
  bool operator==(const CurvePoint&) const = default;
};

struct FinalBest {
  std::string candidate_id;
  double score = 0.0;
  std::optional<double> speedup;
  bool operator==(const FinalBest&) const = default;
};

struct RunReport {
  std::string run_id;
  std::string task_id;
  CandidateProgram seed;
  EvalResult seed_eval;
  std::vector<TrajectoryStep> steps;
  std::vector<CurvePoint> best_score_curve;
  FinalBest final_best;
  double wall_clock_s = 0.0;

  bool operator==(const RunReport&) const = default;
};

void to_json(nlohmann::json& j, const GenerationRef& v);
void from_json(const nlohmann::json& j, GenerationRef& v);
void to_json(nlohmann::json& j, const TrajectoryStep& v);
void from_json(const nlohmann::json& j, TrajectoryStep& v);
void to_json(nlohmann::json& j, const CurvePoint& v);
void from_json(const nlohmann::json& j, CurvePoint& v);
void to_json(nlohmann::json& j, const RunReport& v);
void from_json(const nlohmann::json& j, RunReport& v);

// Point 0 is the seed; point i is the running max over the seed and every
// accepted child up to iteration i. Rejections repeat the previous value.
std::vector<CurvePoint> best_score_curve(const RunReport& report);

// "iteration,best_score,best_speedup" rows.
std::string curve_csv(const std::vector<CurvePoint>& curve);

// Shortest round-trip decimal.
std::string format_number(double v);

std::string step_dir_name(std::uint32_t iteration);

class EvolutionController {
 public:
  using TimeSource = std::function<Timestamp()>;

  struct Options {
    PromptTemplates templates = PromptTemplates::defaults();
    TimeSource now;       // defaults to the system clock
    std::string run_dir;  // empty: nothing persisted
  };

  EvolutionController(TaskSpec task, RunConfig config, Evaluator& evaluator, LlmClient& llm,
                      Options options);

  // Wraps the reference in the block markers, evaluates it, and inserts it
  // into every island.
  std::pair<CandidateProgram, EvalResult> seed_run();

  // Seeds (if not yet seeded) and runs config.iterations steps, stopping
  // early once stop_on_score is reached. Throws only for infrastructure
  // failures.
  RunReport run();

  const Archive& archive() const { return archive_; }

 private:
  TrajectoryStep step(std::uint32_t iteration);
  void persist_step(const TrajectoryStep& step, const std::string& system, const std::string& user,
                    const std::string* generation) const;
  std::string next_candidate_id(std::uint32_t iteration) const;

  TaskSpec task_;
  RunConfig config_;
  Evaluator& evaluator_;
  LlmClient& llm_;
  Options options_;
  Archive archive_;

  std::optional<ProgramView> seed_;
  std::string system_prompt_;
  std::map<std::string, ProgramView> known_;
  std::map<std::uint32_t, std::vector<std::string>> island_history_;
  std::map<std::uint32_t, std::string> pending_feedback_;
};

}  // namespace kevolve
