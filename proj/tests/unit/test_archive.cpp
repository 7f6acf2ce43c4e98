// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>

#include "kevolve/archive/archive.hpp"
#include "kevolve/core/error.hpp"
#include "kevolve/core/rng.hpp"
#include "test_support.hpp"

using namespace kevolve;
using testing_support::eval_with_score;

namespace {

CandidateProgram program(const std::string& id, std::uint32_t island, std::size_t chars) {
  CandidateProgram c;
  c.candidate_id = id;
  c.task_id = "t";
  c.generation = 1;
  c.parent_id = "seed";
  c.island = island;
  c.evolve_block = std::string(chars, 'x');
  c.full_source = c.evolve_block;
  return c;
}

}  // namespace

TEST_CASE("complexity_feature log binning", "[archive]") {
  ArchiveConfig cfg;
  CHECK(complexity_feature("x", cfg) == 0);
  CHECK(complexity_feature(std::string(65536, 'x'), cfg) == 9);
  CHECK(complexity_feature(std::string(1'000'000, 'x'), cfg) == 9);
  // floor(10 * ln 256 / ln 65537) = floor(4.99996...)
  const long double oracle = std::floor(10.0L * std::log(256.0L) / std::log(65537.0L));
  CHECK(oracle == 4.0L);
  CHECK(complexity_feature(std::string(255, 'x'), cfg) == 4);
  // whitespace does not count
  CHECK(complexity_feature(std::string(255, 'x') + std::string(5000, ' ') + "\n\t", cfg) == 4);
  CHECK_THROWS_AS(complexity_feature("", cfg), Error);
}

TEST_CASE("score binning clamps into the configured range", "[archive]") {
  Archive a(ArchiveConfig{});
  CHECK(a.score_bin(-5.0) == 0);
  CHECK(a.score_bin(0.0) == 0);
  CHECK(a.score_bin(0.99) == 0);
  CHECK(a.score_bin(1.0) == 1);
  CHECK(a.score_bin(9.99) == 9);
  CHECK(a.score_bin(10.0) == 9);
  CHECK(a.score_bin(1e9) == 9);
}

TEST_CASE("insert keeps the strict maximum per cell", "[archive]") {
  ArchiveConfig cfg;
  cfg.score_bins = 1;  // every score lands in the same cell
  Archive a(cfg);
  auto first = program("a", 0, 10);
  CHECK(a.insert(first, eval_with_score("a", 3.0), 1).kind == InsertOutcome::Kind::new_cell);
  auto worse = program("b", 0, 10);
  CHECK(a.insert(worse, eval_with_score("b", 2.0), 2).kind == InsertOutcome::Kind::rejected);
  auto tie = program("t", 0, 10);
  CHECK(a.insert(tie, eval_with_score("t", 3.0), 3).kind == InsertOutcome::Kind::rejected);
  CHECK(a.entries().begin()->second.candidate_id == "a");
  auto better = program("c", 0, 10);
  const auto out = a.insert(better, eval_with_score("c", 3.5), 4);
  CHECK(out.kind == InsertOutcome::Kind::replaced);
  CHECK(out.replaced_id == "a");
  CHECK(a.entries().begin()->second.score == 3.5);
  CHECK_FALSE(a.contains_candidate("a"));
  CHECK(a.size() == 1);
}

TEST_CASE("insert validates ids and islands", "[archive]") {
  Archive a(ArchiveConfig{});
  CHECK_THROWS_AS(a.insert(program("a", 0, 5), eval_with_score("other", 3.0), 1), Error);
  CHECK_THROWS_AS(a.insert(program("a", 4, 5), eval_with_score("a", 3.0), 1), Error);
}

TEST_CASE("elitism against a per-cell max oracle", "[archive]") {
  ArchiveConfig cfg;
  cfg.island_count = 3;
  cfg.complexity_bins = 4;
  cfg.score_bins = 5;
  Archive a(cfg);
  Rng rng(99);
  std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>, double> oracle;
  for (int i = 0; i < 1000; ++i) {
    const auto island = static_cast<std::uint32_t>(rng.index(3));
    const std::size_t chars = 1 + rng.index(60000);
    const double score = std::round(rng.uniform01() * 120.0) / 10.0;
    const std::string id = "c" + std::to_string(i);
    a.insert(program(id, island, chars), eval_with_score(id, score), static_cast<std::uint32_t>(i));
    // Independent bin computation.
    const auto cbin = static_cast<std::uint32_t>(std::min(
        3.0, std::floor(4.0 * std::log(1.0 + chars) / std::log(65537.0))));
    const auto sbin = static_cast<std::uint32_t>(std::min(4.0, std::floor(score / 2.0)));
    auto [it, fresh] = oracle.emplace(std::make_tuple(island, cbin, sbin), score);
    if (!fresh) it->second = std::max(it->second, score);
  }
  REQUIRE(a.size() == oracle.size());
  for (const auto& [key, entry] : a.entries()) {
    const auto it = oracle.find({key.island, key.complexity_bin, key.score_bin});
    REQUIRE(it != oracle.end());
    CHECK(entry.score == it->second);
  }
  CHECK(a.size() <= 3u * 4u * 5u);
}

TEST_CASE("sample_parent on trivial and empty islands", "[archive]") {
  Archive a(ArchiveConfig{});
  a.insert(program("only", 1, 20), eval_with_score("only", 4.0), 1);
  for (int i = 0; i < 10; ++i) CHECK(a.sample_parent(1).candidate_id == "only");
  try {
    a.sample_parent(0);
    FAIL("expected empty-island error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_island);
  }
}

TEST_CASE("sample_parent follows the softmax over cell scores", "[archive]") {
  Archive a(ArchiveConfig{});
  a.insert(program("hi", 0, 20), eval_with_score("hi", 10.0), 1);
  a.insert(program("lo", 0, 20), eval_with_score("lo", 0.0), 2);
  int hi = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) hi += a.sample_parent(0).candidate_id == "hi";
  const double expected = std::exp(10.0) / (std::exp(10.0) + 1.0);
  CHECK(std::abs(static_cast<double>(hi) / draws - expected) <= 0.02);

  ArchiveConfig hot;
  hot.parent_temperature = 1e6;  // near-uniform
  Archive b(hot);
  b.insert(program("hi", 0, 20), eval_with_score("hi", 10.0), 1);
  b.insert(program("lo", 0, 20), eval_with_score("lo", 0.0), 2);
  hi = 0;
  for (int i = 0; i < draws; ++i) hi += b.sample_parent(0).candidate_id == "hi";
  CHECK(std::abs(static_cast<double>(hi) / draws - 0.5) <= 0.02);
}

TEST_CASE("sample_inspirations returns global elites then diverse cells", "[archive]") {
  Archive sparse(ArchiveConfig{});
  sparse.insert(program("one", 0, 30), eval_with_score("one", 3.0), 1);
  const auto single = sparse.sample_inspirations(0, 3, 2);
  REQUIRE(single.size() == 1);
  CHECK(single[0].candidate_id == "one");

  Archive a(ArchiveConfig{});
  const double scores[] = {2.5, 7.0, 4.0, 9.0, 5.5};
  for (int i = 0; i < 5; ++i)
    a.insert(program("p" + std::to_string(i), static_cast<std::uint32_t>(i % 4), 30),
             eval_with_score("p" + std::to_string(i), scores[i]), 1);
  const auto got = a.sample_inspirations(0, 2, 0);
  REQUIRE(got.size() == 2);
  CHECK(got[0].candidate_id == "p3");
  CHECK(got[1].candidate_id == "p1");

  const auto mixed = a.sample_inspirations(0, 2, 2);
  REQUIRE(mixed.size() == 4);
  std::set<std::string> ids;
  std::set<CellKey> keys;
  for (const auto& e : mixed) {
    ids.insert(e.candidate_id);
    keys.insert(e.key);
  }
  CHECK(ids.size() == 4);
  CHECK(keys.size() == 4);
}

TEST_CASE("inspirations never repeat a candidate stored on several islands", "[archive]") {
  Archive a(ArchiveConfig{});
  auto seed = program("seed", 0, 40);
  for (std::uint32_t i = 0; i < 4; ++i) a.insert_into(i, seed, eval_with_score("seed", 3.0), 0);
  a.insert(program("x", 2, 40), eval_with_score("x", 5.0), 1);
  const auto got = a.sample_inspirations(1, 3, 2);
  std::set<std::string> ids;
  for (const auto& e : got) CHECK(ids.insert(e.candidate_id).second);
  CHECK(ids == std::set<std::string>{"seed", "x"});
}

TEST_CASE("ring migration", "[archive]") {
  ArchiveConfig cfg;
  cfg.island_count = 2;
  cfg.migration_interval = 1;
  cfg.migration_size = 1;
  Archive a(cfg);
  a.insert(program("best0", 0, 30), eval_with_score("best0", 9.0), 1);
  a.insert(program("best1", 1, 30), eval_with_score("best1", 2.0), 1);
  // Both bests move one hop: 9.0 into island 1, 2.0 into an empty cell of island 0.
  CHECK(a.migrate(1) == 2);
  bool found = false;
  for (const auto& e : a.island_entries(1)) found |= e.candidate_id == "best0" && e.score == 9.0;
  CHECK(found);

  ArchiveConfig tenth;
  Archive b(tenth);
  b.insert(program("z", 0, 30), eval_with_score("z", 9.0), 1);
  CHECK(b.migrate(7) == 0);
}

TEST_CASE("migration never lowers a cell score", "[archive]") {
  ArchiveConfig cfg;
  cfg.island_count = 3;
  cfg.migration_interval = 1;
  cfg.migration_size = 2;
  Archive a(cfg);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const std::string id = "m" + std::to_string(i);
    a.insert(program(id, static_cast<std::uint32_t>(rng.index(3)), 1 + rng.index(5000)),
             eval_with_score(id, rng.uniform01() * 10.0), static_cast<std::uint32_t>(i));
    const auto before = a.entries();
    a.migrate(static_cast<std::uint32_t>(i + 1));
    for (const auto& [key, entry] : before) REQUIRE(a.entries().at(key).score >= entry.score);
  }
}

TEST_CASE("seeded sampling is deterministic and checkpoints restore exactly", "[archive]") {
  auto build = [] {
    ArchiveConfig cfg;
    cfg.rng_seed = 1234;
    Archive a(cfg);
    for (int i = 0; i < 40; ++i) {
      const std::string id = "d" + std::to_string(i);
      a.insert(program(id, static_cast<std::uint32_t>(i % 4), 10 + 97 * i), eval_with_score(id, (i * 37 % 100) / 10.0),
               static_cast<std::uint32_t>(i));
    }
    return a;
  };
  auto trace = [](Archive& a) {
    std::vector<std::string> out;
    for (int i = 0; i < 50; ++i) {
      out.push_back(a.sample_parent(static_cast<std::uint32_t>(i % 4)).candidate_id);
      for (const auto& e : a.sample_inspirations(static_cast<std::uint32_t>(i % 4), 3, 2)) out.push_back(e.candidate_id);
    }
    return out;
  };
  Archive a = build(), b = build();
  CHECK(trace(a) == trace(b));

  Archive c = build();
  trace(c);
  const auto snapshot = c.checkpoint();
  Archive restored = Archive::restore(snapshot);
  CHECK(restored.checkpoint() == snapshot);
  CHECK(trace(restored) == trace(c));
}
