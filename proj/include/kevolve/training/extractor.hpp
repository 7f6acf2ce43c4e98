// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kevolve/core/types.hpp"
#include "kevolve/evolve/controller.hpp"

namespace kevolve {

enum class SampleKind { correctness_sft, performance_sft, best_step_rl };

std::string_view to_string(SampleKind kind);
SampleKind sample_kind_from_string(std::string_view name);

struct InputContext {
  std::string system_text;
  std::string user_text;
  bool operator==(const InputContext&) const = default;
};

struct SourceStep {
  std::string run_id;
  std::uint32_t iteration = 0;
  bool operator==(const SourceStep&) const = default;
};

// One accepted step with everything the filters need. Rejected steps never
// become drafts.
struct StepDraft {
  SourceStep source;
  std::string task_id;
  InputContext input_context;
  std::string target_output;
  std::string parent_id;
  std::uint32_t parent_generation = 0;
  EvalResult parent_eval;
  CandidateProgram child;
  EvalResult child_eval;
  std::vector<std::string> context_ids;  // inspirations and previous attempts
  double seed_score = 0.0;
  Difficulty difficulty = Difficulty::easy;

  bool from_seed() const { return parent_generation == 0; }
  bool operator==(const StepDraft&) const = default;
};

struct TrainingSample {
  std::string sample_id;
  SampleKind kind = SampleKind::correctness_sft;
  InputContext input_context;
  std::string target_output;
  double parent_runtime_ns = 0.0;  // 0 when the parent has no timing
  double child_runtime_ns = 0.0;
  double achieved_speedup_vs_parent = 0.0;
  std::optional<double> reward;  // present iff best_step_rl
  Difficulty difficulty = Difficulty::easy;
  std::string task_id;
  SourceStep source_step;
  // Audit fields.
  std::string candidate_id;
  std::string parent_id;
  double target_score = 0.0;
  std::optional<double> child_speedup;  // vs the task baseline
  std::vector<std::string> context_ids;

  void validate() const;
  bool operator==(const TrainingSample&) const = default;
};

void to_json(nlohmann::json& j, const TrainingSample& v);
void from_json(const nlohmann::json& j, TrainingSample& v);

// Reads run.json and steps/NNN/{system,prompt,generation}.txt. Throws
// missing_artifact when a file for an accepted step is absent.
std::vector<StepDraft> decompose(const std::string& run_dir, Difficulty difficulty);
std::vector<StepDraft> decompose(const RunReport& report, const std::string& run_dir,
                                 Difficulty difficulty);

// Seed-parent steps with a correct child, speedup irrelevant.
std::vector<TrainingSample> filter_correctness(const std::vector<StepDraft>& drafts);
// Non-seed-parent steps with a correct child and baseline speedup > 1.0.
std::vector<TrainingSample> filter_performance(const std::vector<StepDraft>& drafts);
// Steps whose child strictly beats the seed and every earlier child of the
// same run, minus seed-parent steps. The reward is the speedup over the
// parent. Drafts may span runs; the running max is kept per run.
std::vector<TrainingSample> select_best_steps(const std::vector<StepDraft>& drafts);

struct RlMember {
  std::string candidate_id;
  double reward = 0.0;
  bool operator==(const RlMember&) const = default;
};

struct RLGroup {
  std::string group_id;
  std::string parent_candidate_id;
  std::string prompt_hash;
  std::vector<RlMember> members;
  bool operator==(const RLGroup&) const = default;
};

void to_json(nlohmann::json& j, const RLGroup& v);

inline constexpr std::size_t kDefaultGroupSize = 8;

// reward_i = parent mean / child mean for valid children, else 0. Throws
// parent_invalid when the parent has no timing, invalid_argument when
// group_size is given and differs from the child count.
RLGroup grpo_rewards(const EvalResult& parent_eval, const std::vector<EvalResult>& children,
                     std::optional<std::size_t> group_size = std::nullopt);

std::vector<std::string> load_vocabulary(const std::string& path);
std::vector<std::string> default_vocabulary();

// Distinct vocabulary identifiers occurring as whole identifiers.
std::size_t count_operators(std::string_view source, const std::vector<std::string>& vocabulary);

// < 3 easy, 3..7 medium, > 7 hard; task.difficulty_level wins when set.
Difficulty bucket_difficulty(const TaskSpec& task, std::string_view reference_source,
                             const std::vector<std::string>& vocabulary);

struct CatalogEntry {
  double score = 0.0;
  std::string evolve_block;
};

// Every candidate of one or more runs by id.
using CandidateCatalog = std::map<std::string, CatalogEntry>;

CandidateCatalog catalog_of(const RunReport& report);

struct LeakageFinding {
  std::string sample_id;
  std::string leaked_candidate_id;
  double leaked_score = 0.0;
  double target_score = 0.0;
};

struct LeakageAudit {
  std::vector<TrainingSample> kept;
  std::vector<LeakageFinding> dropped;
};

// Drops samples whose context references, or quotes verbatim, a candidate
// scoring above the sample's own target. The sample's parent is exempt.
LeakageAudit audit_leakage(std::vector<TrainingSample> samples, const CandidateCatalog& catalog);

struct BucketCount {
  std::size_t available = 0;
  std::size_t selected = 0;
  bool operator==(const BucketCount&) const = default;
};

struct Shard {
  std::vector<TrainingSample> samples;
  std::map<std::string, BucketCount> buckets;  // "kind/difficulty"
  std::size_t quota = 0;
  std::uint64_t seed = 0;
};

// min(quota, available) draws without replacement per (kind, difficulty).
Shard balanced_sample(const std::vector<TrainingSample>& samples, std::size_t per_bucket_quota,
                      std::uint64_t seed);

inline constexpr int kShardSchemaVersion = 1;

// <dir>/samples.jsonl and <dir>/manifest.json. Returns the manifest.
nlohmann::json write_shard(const Shard& shard, const std::string& dir,
                           const std::vector<LeakageFinding>& dropped = {});

}  // namespace kevolve
