// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/archive/archive.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "kevolve/core/error.hpp"
#include "kevolve/core/serialization.hpp"

namespace kevolve {

namespace {

bool ranks_before(const ArchiveEntry& a, const ArchiveEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.insertion_seq < b.insertion_seq;
}

}  // namespace

void ArchiveConfig::validate() const {
  if (island_count < 1 || complexity_bins < 1 || score_bins < 1)
    throw Error(ErrorCode::invalid_argument, "archive dimensions must be >= 1");
  if (!(score_max > score_min))
    throw Error(ErrorCode::invalid_argument, "score range must have max > min");
  if (complexity_ceiling < 1)
    throw Error(ErrorCode::invalid_argument, "complexity ceiling must be >= 1");
  if (top_k + diverse_k < 1)
    throw Error(ErrorCode::invalid_argument, "top_k + diverse_k must be >= 1");
  if (!(parent_temperature > 0.0))
    throw Error(ErrorCode::invalid_argument, "parent temperature must be positive");
}

std::uint32_t complexity_feature(std::string_view source, const ArchiveConfig& config) {
  if (source.empty()) throw Error(ErrorCode::invalid_argument, "complexity of empty source");
  const auto n = static_cast<double>(std::count_if(
      source.begin(), source.end(), [](unsigned char c) { return !std::isspace(c); }));
  const double ratio = std::log1p(n) / std::log1p(static_cast<double>(config.complexity_ceiling));
  const double raw = std::floor(static_cast<double>(config.complexity_bins) * ratio);
  const double top = static_cast<double>(config.complexity_bins - 1);
  return static_cast<std::uint32_t>(std::clamp(raw, 0.0, top));
}

Archive::Archive(ArchiveConfig config) : config_(config), rng_(config.rng_seed) {
  config_.validate();
}

std::uint32_t Archive::score_bin(double score) const {
  const double span = config_.score_max - config_.score_min;
  const double raw = std::floor(config_.score_bins * (score - config_.score_min) / span);
  return static_cast<std::uint32_t>(std::clamp(raw, 0.0, double(config_.score_bins - 1)));
}

CellKey Archive::key_for(std::uint32_t island, const CandidateProgram& candidate,
                         const EvalResult& eval) const {
  const std::string_view feature_source =
      candidate.evolve_block.empty() ? std::string_view(candidate.full_source)
                                     : std::string_view(candidate.evolve_block);
  return CellKey{island, complexity_feature(feature_source, config_), score_bin(eval.score)};
}

void Archive::check_island(std::uint32_t island) const {
  if (island >= config_.island_count)
    throw Error(ErrorCode::invalid_argument,
                "island " + std::to_string(island) + " out of range");
}

void Archive::retain(const CandidateProgram& candidate, const EvalResult& eval) {
  auto [it, inserted] = programs_.try_emplace(candidate.candidate_id, Stored{candidate, eval, 0});
  ++it->second.cells;
}

void Archive::release(const std::string& candidate_id) {
  auto it = programs_.find(candidate_id);
  if (it != programs_.end() && --it->second.cells == 0) programs_.erase(it);
}

InsertOutcome Archive::insert(const CandidateProgram& candidate, const EvalResult& eval,
                              std::uint32_t iteration) {
  return insert_into(candidate.island, candidate, eval, iteration);
}

InsertOutcome Archive::insert_into(std::uint32_t island, const CandidateProgram& candidate,
                                   const EvalResult& eval, std::uint32_t iteration) {
  if (candidate.candidate_id != eval.candidate_id)
    throw Error(ErrorCode::invalid_argument, "candidate '" + candidate.candidate_id +
                                                 "' does not match eval '" +
                                                 eval.candidate_id + "'");
  check_island(island);
  const CellKey key = key_for(island, candidate, eval);

  ArchiveEntry entry{key,        candidate.candidate_id, eval.score, eval.speedup,
                     eval.stage, iteration,              next_seq_};

  auto it = cells_.find(key);
  if (it == cells_.end()) {
    ++next_seq_;
    cells_.emplace(key, entry);
    retain(candidate, eval);
    return {InsertOutcome::Kind::new_cell, {}};
  }
  if (!(eval.score > it->second.score)) return {InsertOutcome::Kind::rejected, {}};

  ++next_seq_;
  std::string old_id = it->second.candidate_id;
  retain(candidate, eval);
  it->second = entry;
  release(old_id);
  return {InsertOutcome::Kind::replaced, old_id};
}

std::vector<ArchiveEntry> Archive::island_entries(std::uint32_t island) const {
  std::vector<ArchiveEntry> out;
  for (const auto& [key, entry] : cells_)
    if (key.island == island) out.push_back(entry);
  return out;
}

const CandidateProgram& Archive::sample_parent(std::uint32_t island) {
  check_island(island);
  const auto pool = island_entries(island);
  if (pool.empty())
    throw Error(ErrorCode::empty_island, "island " + std::to_string(island) + " is empty");

  double max_score = pool.front().score;
  for (const auto& e : pool) max_score = std::max(max_score, e.score);
  std::vector<double> weights;
  weights.reserve(pool.size());
  double total = 0.0;
  for (const auto& e : pool) {
    weights.push_back(std::exp((e.score - max_score) / config_.parent_temperature));
    total += weights.back();
  }

  const double target = rng_.uniform01() * total;
  double acc = 0.0;
  std::size_t chosen = pool.size() - 1;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    acc += weights[i];
    if (target < acc) {
      chosen = i;
      break;
    }
  }
  return programs_.at(pool[chosen].candidate_id).candidate;
}

std::vector<ArchiveEntry> Archive::sample_inspirations(std::uint32_t island, std::size_t top_k,
                                                       std::size_t diverse_k) {
  check_island(island);
  if (top_k + diverse_k < 1)
    throw Error(ErrorCode::invalid_argument, "top_k + diverse_k must be >= 1");

  std::vector<ArchiveEntry> ranked;
  ranked.reserve(cells_.size());
  for (const auto& [key, entry] : cells_) ranked.push_back(entry);
  std::sort(ranked.begin(), ranked.end(), ranks_before);

  std::vector<ArchiveEntry> out;
  std::set<CellKey> used_keys;
  std::set<std::string> used_ids;
  for (const auto& e : ranked) {
    if (out.size() >= top_k) break;
    if (used_ids.contains(e.candidate_id)) continue;
    out.push_back(e);
    used_keys.insert(e.key);
    used_ids.insert(e.candidate_id);
  }

  std::vector<ArchiveEntry> pool;
  for (const auto& [key, entry] : cells_)
    if (!used_keys.contains(key) && !used_ids.contains(entry.candidate_id)) pool.push_back(entry);

  std::size_t drawn = 0;
  while (drawn < diverse_k && !pool.empty()) {
    const std::size_t pick = rng_.index(pool.size());
    ArchiveEntry e = pool[pick];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    if (used_ids.contains(e.candidate_id)) continue;
    used_ids.insert(e.candidate_id);
    used_keys.insert(e.key);
    out.push_back(std::move(e));
    ++drawn;
  }
  return out;
}

std::size_t Archive::migrate(std::uint32_t iteration) {
  if (config_.migration_interval == 0 || iteration % config_.migration_interval != 0) return 0;
  if (config_.island_count < 2 || config_.migration_size == 0) return 0;

  // Snapshot first so a migrant moves at most one hop per call. Records are
  // copied because an earlier insert may release an emigrant's last cell.
  std::vector<std::vector<std::pair<CandidateProgram, EvalResult>>> emigrants(config_.island_count);
  for (std::uint32_t island = 0; island < config_.island_count; ++island) {
    auto pool = island_entries(island);
    std::sort(pool.begin(), pool.end(), ranks_before);
    if (pool.size() > config_.migration_size) pool.resize(config_.migration_size);
    for (const auto& e : pool) {
      const Stored& stored = programs_.at(e.candidate_id);
      emigrants[island].emplace_back(stored.candidate, stored.eval);
    }
  }

  std::size_t moved = 0;
  for (std::uint32_t island = 0; island < config_.island_count; ++island) {
    const std::uint32_t target = (island + 1) % config_.island_count;
    for (const auto& [candidate, eval] : emigrants[island])
      if (insert_into(target, candidate, eval, iteration).kind != InsertOutcome::Kind::rejected) ++moved;
  }
  return moved;
}

std::optional<ArchiveEntry> Archive::best() const {
  std::optional<ArchiveEntry> out;
  for (const auto& [key, entry] : cells_)
    if (!out || ranks_before(entry, *out)) out = entry;
  return out;
}

bool Archive::contains_candidate(const std::string& candidate_id) const {
  return programs_.contains(candidate_id);
}

const CandidateProgram& Archive::candidate(const std::string& candidate_id) const {
  auto it = programs_.find(candidate_id);
  if (it == programs_.end())
    throw Error(ErrorCode::invalid_argument, "candidate '" + candidate_id + "' not archived");
  return it->second.candidate;
}

const EvalResult& Archive::eval(const std::string& candidate_id) const {
  auto it = programs_.find(candidate_id);
  if (it == programs_.end())
    throw Error(ErrorCode::invalid_argument, "candidate '" + candidate_id + "' not archived");
  return it->second.eval;
}

nlohmann::json Archive::checkpoint() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [key, entry] : cells_) entries.push_back(entry);
  nlohmann::json programs = nlohmann::json::array();
  for (const auto& [id, stored] : programs_)
    programs.push_back({{"candidate", stored.candidate}, {"eval", stored.eval}});
  return {{"config", config_},
          {"entries", entries},
          {"programs", programs},
          {"rng_state", rng_.state()},
          {"next_seq", next_seq_}};
}

Archive Archive::restore(const nlohmann::json& checkpoint) {
  Archive archive(checkpoint.at("config").get<ArchiveConfig>());
  for (const auto& p : checkpoint.at("programs"))
    archive.programs_.emplace(p.at("candidate").at("candidate_id").get<std::string>(),
                              Stored{p.at("candidate").get<CandidateProgram>(),
                                     p.at("eval").get<EvalResult>(), 0});
  for (const auto& e : checkpoint.at("entries")) {
    auto entry = e.get<ArchiveEntry>();
    auto it = archive.programs_.find(entry.candidate_id);
    if (it == archive.programs_.end())
      throw Error(ErrorCode::parse_error, "checkpoint entry without program " + entry.candidate_id);
    ++it->second.cells;
    archive.cells_.emplace(entry.key, std::move(entry));
  }
  archive.rng_.restore(checkpoint.at("rng_state").get<std::string>());
  archive.next_seq_ = checkpoint.at("next_seq").get<std::uint64_t>();
  return archive;
}

void to_json(nlohmann::json& j, const CellKey& v) {
  j = {{"island", v.island}, {"complexity_bin", v.complexity_bin}, {"score_bin", v.score_bin}};
}
void from_json(const nlohmann::json& j, CellKey& v) {
  j.at("island").get_to(v.island);
  j.at("complexity_bin").get_to(v.complexity_bin);
  j.at("score_bin").get_to(v.score_bin);
}

void to_json(nlohmann::json& j, const ArchiveConfig& v) {
  j = {{"island_count", v.island_count},
       {"complexity_bins", v.complexity_bins},
       {"score_bins", v.score_bins},
       {"score_range", {v.score_min, v.score_max}},
       {"complexity_ceiling", v.complexity_ceiling},
       {"migration_interval", v.migration_interval},
       {"migration_size", v.migration_size},
       {"top_k", v.top_k},
       {"diverse_k", v.diverse_k},
       {"parent_temperature", v.parent_temperature},
       {"rng_seed", v.rng_seed}};
}
void from_json(const nlohmann::json& j, ArchiveConfig& v) {
  auto get = [&j](const char* key, auto& out) {
    if (auto it = j.find(key); it != j.end()) it->get_to(out);
  };
  get("island_count", v.island_count);
  get("complexity_bins", v.complexity_bins);
  get("score_bins", v.score_bins);
  if (auto it = j.find("score_range"); it != j.end()) {
    v.score_min = it->at(0).get<double>();
    v.score_max = it->at(1).get<double>();
  }
  get("complexity_ceiling", v.complexity_ceiling);
  get("migration_interval", v.migration_interval);
  get("migration_size", v.migration_size);
  get("top_k", v.top_k);
  get("diverse_k", v.diverse_k);
  get("parent_temperature", v.parent_temperature);
  get("rng_seed", v.rng_seed);
}

void to_json(nlohmann::json& j, const ArchiveEntry& v) {
  j = {{"key", v.key},
       {"candidate_id", v.candidate_id},
       {"score", v.score},
       {"speedup", v.speedup ? nlohmann::json(*v.speedup) : nlohmann::json(nullptr)},
       {"stage", v.stage},
       {"inserted_at_iteration", v.inserted_at_iteration},
       {"insertion_seq", v.insertion_seq}};
}
void from_json(const nlohmann::json& j, ArchiveEntry& v) {
  j.at("key").get_to(v.key);
  j.at("candidate_id").get_to(v.candidate_id);
  j.at("score").get_to(v.score);
  if (const auto& s = j.at("speedup"); !s.is_null())
    v.speedup = s.get<double>();
  else
    v.speedup.reset();
  j.at("stage").get_to(v.stage);
  j.at("inserted_at_iteration").get_to(v.inserted_at_iteration);
  j.at("insertion_seq").get_to(v.insertion_seq);
}

}  // namespace kevolve
