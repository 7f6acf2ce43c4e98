// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kevolve/core/rng.hpp"
#include "kevolve/core/types.hpp"

namespace kevolve {

struct CellKey {
  std::uint32_t island = 0;
  std::uint32_t complexity_bin = 0;
  std::uint32_t score_bin = 0;

  auto operator<=>(const CellKey&) const = default;
};

struct ArchiveConfig {
  std::uint32_t island_count = 4;
  std::uint32_t complexity_bins = 10;
  std::uint32_t score_bins = 10;
  double score_min = 0.0;
  double score_max = 10.0;
  std::size_t complexity_ceiling = 65536;  // N_max for the log binning
  std::uint32_t migration_interval = 10;   // 0 disables migration
  std::uint32_t migration_size = 1;
  std::size_t top_k = 3;
  std::size_t diverse_k = 2;
  double parent_temperature = 1.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
  bool operator==(const ArchiveConfig&) const = default;
};

struct ArchiveEntry {
  CellKey key;
  std::string candidate_id;
  double score = 0.0;
  std::optional<double> speedup;
  Stage stage = Stage::compile_error;
  std::uint32_t inserted_at_iteration = 0;
  std::uint64_t insertion_seq = 0;  // global tie-breaker, earlier wins

  bool operator==(const ArchiveEntry&) const = default;
};

struct InsertOutcome {
  enum class Kind { new_cell, replaced, rejected };
  Kind kind = Kind::rejected;
  std::string replaced_id;  // set for replaced
};

// bin = clamp(floor(bins * ln(1+n) / ln(1+N_max)), 0, bins-1) where n counts
// non-whitespace characters.
std::uint32_t complexity_feature(std::string_view source, const ArchiveConfig& config);

// Island-partitioned MAP-Elites grid over (complexity bin, score bin). Each
// cell keeps the highest-scoring candidate ever offered to it; ties keep the
// incumbent. Not thread-safe: one controller owns it.
class Archive {
 public:
  explicit Archive(ArchiveConfig config);

  const ArchiveConfig& config() const { return config_; }

  std::uint32_t score_bin(double score) const;
  CellKey key_for(std::uint32_t island, const CandidateProgram& candidate,
                  const EvalResult& eval) const;

  // Inserts into candidate.island.
  InsertOutcome insert(const CandidateProgram& candidate, const EvalResult& eval,
                       std::uint32_t iteration);
  InsertOutcome insert_into(std::uint32_t island, const CandidateProgram& candidate,
                            const EvalResult& eval, std::uint32_t iteration);

  // Softmax over the island's cell scores at config.parent_temperature.
  const CandidateProgram& sample_parent(std::uint32_t island);

  // Global elites first (score desc, earlier insertion first), then up to
  // diverse_k uniform draws from the remaining cells.
  std::vector<ArchiveEntry> sample_inspirations(std::uint32_t island, std::size_t top_k,
                                                std::size_t diverse_k);

  // Ring migration every migration_interval iterations. Returns the number of
  // migrants the receiving islands accepted.
  std::size_t migrate(std::uint32_t iteration);

  const std::map<CellKey, ArchiveEntry>& entries() const { return cells_; }
  std::vector<ArchiveEntry> island_entries(std::uint32_t island) const;
  std::optional<ArchiveEntry> best() const;
  std::size_t size() const { return cells_.size(); }

  bool contains_candidate(const std::string& candidate_id) const;
  const CandidateProgram& candidate(const std::string& candidate_id) const;
  const EvalResult& eval(const std::string& candidate_id) const;

  nlohmann::json checkpoint() const;
  static Archive restore(const nlohmann::json& checkpoint);

 private:
  struct Stored {
    CandidateProgram candidate;
    EvalResult eval;
    std::size_t cells = 0;
  };

  void check_island(std::uint32_t island) const;
  void retain(const CandidateProgram& candidate, const EvalResult& eval);
  void release(const std::string& candidate_id);

  ArchiveConfig config_;
  std::map<CellKey, ArchiveEntry> cells_;
  std::map<std::string, Stored> programs_;
  Rng rng_;
  std::uint64_t next_seq_ = 0;
};

void to_json(nlohmann::json& j, const CellKey& v);
void from_json(const nlohmann::json& j, CellKey& v);
void to_json(nlohmann::json& j, const ArchiveConfig& v);
void from_json(const nlohmann::json& j, ArchiveConfig& v);
void to_json(nlohmann::json& j, const ArchiveEntry& v);
void from_json(const nlohmann::json& j, ArchiveEntry& v);

}  // namespace kevolve
