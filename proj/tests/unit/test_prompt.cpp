// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <functional>
#include <filesystem>

#include "kevolve/core/error.hpp"
#include "kevolve/core/rng.hpp"
#include "kevolve/core/serialization.hpp"
#include "kevolve/prompt/evolve_block.hpp"
#include "kevolve/prompt/prompt_engine.hpp"
#include "test_support.hpp"

using namespace kevolve;
using testing_support::simple_task;

namespace {

const BlockMarkers kMarkers;

std::string random_line(Rng& rng) {
  static const char* words[] = {"x", "=", "1", "tl.load(ptr)", "def", "kernel", "(", ")", ":", "#", "mask",
                                " ", "\t", "return", "@triton.jit", "\xce\xbb", "```", "EVOLVE"};
  std::string line;
  for (std::size_t n = rng.index(8); n > 0; --n) line += words[rng.index(std::size(words))];
  return line;
}

// Newline-terminated text without marker or fence lines.
std::string random_text(Rng& rng, std::size_t max_lines) {
  std::string out;
  for (std::size_t n = rng.index(max_lines + 1); n > 0; --n) {
    std::string line = random_line(rng);
    if (line.find("```") == 0) line = "# " + line;
    out += line + "\n";
  }
  return out;
}

std::string program(const std::string& prefix, const std::string& block, const std::string& suffix) {
  return prefix + kMarkers.start_marker + "\n" + block + kMarkers.end_marker + "\n" + suffix;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::invalid_argument;
}

ProgramView view(const std::string& id, double score, const std::string& block) {
  CandidateProgram p = testing_support::child_of(testing_support::seed_candidate(), id, block);
  return {p, testing_support::eval_with_score(id, score)};
}

UserPromptContext base_context() {
  UserPromptContext ctx;
  ctx.target_class = "ModelNew";
  ctx.current = testing_support::seed_candidate();
  ctx.current_eval = testing_support::eval_with_score(ctx.current.candidate_id, 3.0);
  return ctx;
}

}  // namespace

TEST_CASE("system prompt carries the block contract", "[prompt]") {
  const TaskSpec task = simple_task();
  const std::string a = render_system_prompt(task, {{"device", "A100"}, {"memory", "80GB"}});
  const std::string b = render_system_prompt(task, {{"device", "A100"}, {"memory", "80GB"}});
  CHECK(a == b);
  std::size_t count = 0;
  for (auto pos = a.find("EVOLVE-BLOCK"); pos != std::string::npos; pos = a.find("EVOLVE-BLOCK", pos + 1)) ++count;
  CHECK(count >= 2);
  CHECK(a.find("all other code is LOCKED") != std::string::npos);
  CHECK(a.find(task.reference_source) != std::string::npos);
  CHECK(a.find("device: A100") != std::string::npos);
  CHECK(a.find("Compilation Pass") != std::string::npos);
  CHECK(a.find("Numerical Correctness") != std::string::npos);
  CHECK(a.find("Performance Gain") != std::string::npos);
  CHECK(a.find("{{") == std::string::npos);
}

TEST_CASE("system prompt golden file with empty hardware metadata", "[prompt]") {
  const std::string rendered = render_system_prompt(simple_task(), {});
  CHECK(rendered.find("unknown device") != std::string::npos);
  const std::string golden = std::string(KEVOLVE_FIXTURES) + "/golden/system_prompt_unknown_device.txt";
  if (std::getenv("KEVOLVE_UPDATE_GOLDEN")) write_text_file(golden, rendered);
  REQUIRE(std::filesystem::exists(golden));
  CHECK(rendered == read_text_file(golden));
}

TEST_CASE("templates report missing fields", "[prompt]") {
  CHECK(render_template("a {{x}} b {{x}}", {{"x", "1"}}) == "a 1 b 1");
  CHECK(code_of([] { render_template("{{missing}}", {}); }) == ErrorCode::missing_template_field);
  PromptTemplates broken = PromptTemplates::defaults();
  broken.system += "{{not_a_field}}";
  CHECK(code_of([&] { render_system_prompt(simple_task(), {}, broken); }) == ErrorCode::missing_template_field);
}

TEST_CASE("user prompt sections and metric formatting", "[prompt]") {
  UserPromptContext ctx = base_context();
  ctx.current_eval = testing_support::eval_with_score(ctx.current.candidate_id, 5.03);
  const std::string text = render_user_prompt(ctx);
  CHECK(text.find("score: 5.0300") != std::string::npos);
  CHECK(text.find("compiled: 1.0000") != std::string::npos);
  const auto target = text.find("ModelNew");
  const auto prev = text.find("Previous Attempts");
  const auto top = text.find("Top Performing Programs");
  const auto cur = text.find("Current Program");
  const auto info = text.find("Current Program Information");
  const auto stage = text.find("Stage: passed");
  REQUIRE(target != std::string::npos);
  CHECK(target < prev);
  CHECK(prev < top);
  CHECK(top < cur);
  CHECK(cur < info);
  CHECK(info < stage);
  CHECK(text.find("(none)", prev) < top);
  CHECK(text.find("(none)", top) < cur);
  CHECK(text.find("Runtime Error Message") == std::string::npos);
  CHECK(text.rfind("improved internal implementation") != std::string::npos);
}

TEST_CASE("error stages carry the log verbatim", "[prompt]") {
  UserPromptContext ctx = base_context();
  ctx.current_eval = EvalResult{};
  ctx.current_eval.candidate_id = ctx.current.candidate_id;
  ctx.current_eval.compiled = true;
  ctx.current_eval.stage = Stage::runtime_error;
  ctx.current_eval.score = 1.0;
  ctx.current_eval.error_log = "index out of bounds";
  const std::string text = render_user_prompt(ctx);
  CHECK(text.find("Stage: runtime_error") != std::string::npos);
  const auto pos = text.find("Runtime Error Message");
  REQUIRE(pos != std::string::npos);
  CHECK(text.find("index out of bounds", pos) != std::string::npos);
  CHECK(text.find("correctness: 0.0000") != std::string::npos);
}

TEST_CASE("previous and top programs render with their metrics", "[prompt]") {
  UserPromptContext ctx = base_context();
  ctx.previous = {view("p1", 2.5, "prev_block_one()\n")};
  ctx.top = {view("t1", 7.25, "top_block_one()\n"), view("t2", 4.0, "top_block_two()\n")};
  ctx.feedback_note = "the previous generation was rejected (no_block): start marker not found";
  const std::string text = render_user_prompt(ctx);
  CHECK(text.find("prev_block_one()") != std::string::npos);
  CHECK(text.find("top_block_one()") < text.find("top_block_two()"));
  CHECK(text.find("score: 7.2500") != std::string::npos);
  CHECK(text.find("start marker not found") != std::string::npos);
  ctx.current_eval.candidate_id = "someone-else";
  CHECK_THROWS_AS(render_user_prompt(ctx), Error);
}

TEST_CASE("extract_evolve_block", "[prompt]") {
  const std::string p = program("import torch\n", "def k():\n    return 1\n", "print(1)\n");
  const auto got = extract_evolve_block(p, kMarkers);
  CHECK(got.block == "def k():\n    return 1\n");
  CHECK(got.full_program == p);

  const std::string fenced = "Here you go:\n```python\n" + p + "```\nThanks.\n";
  const auto from_fence = extract_evolve_block(fenced, kMarkers);
  CHECK(from_fence.block == got.block);
  CHECK(from_fence.full_program == p);

  const std::string padded = "x\n" + kMarkers.start_marker + "   \nbody\n" + kMarkers.end_marker + "\t\n";
  CHECK(extract_evolve_block(padded, kMarkers).block == "body\n");

  CHECK(code_of([] { extract_evolve_block("no markers here\n", kMarkers); }) == ErrorCode::no_block);
  CHECK(code_of([] { extract_evolve_block(kMarkers.start_marker + "\nbody\n", kMarkers); }) == ErrorCode::no_block);
  const std::string two_starts = kMarkers.start_marker + "\n" + program("", "a\n", "");
  CHECK(code_of([&] { extract_evolve_block(two_starts, kMarkers); }) == ErrorCode::ambiguous_block);
  const std::string two_ends = program("", "a\n", "") + kMarkers.end_marker + "\n";
  CHECK(code_of([&] { extract_evolve_block(two_ends, kMarkers); }) == ErrorCode::ambiguous_block);
  const std::string inverted = kMarkers.end_marker + "\nbody\n" + kMarkers.start_marker + "\n";
  CHECK(code_of([&] { extract_evolve_block(inverted, kMarkers); }) == ErrorCode::inverted_markers);
}

TEST_CASE("fenced and bare generations extract identically", "[prompt]") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const std::string p = program(random_text(rng, 4), random_text(rng, 6), random_text(rng, 4));
    const auto bare = extract_evolve_block(p, kMarkers);
    for (const std::string tag : {"", "python", "py"}) {
      const auto fenced = extract_evolve_block("Some prose.\n```" + tag + "\n" + p + "```\n", kMarkers);
      REQUIRE(fenced.block == bare.block);
      REQUIRE(fenced.full_program == bare.full_program);
    }
  }
}

TEST_CASE("merge_block replaces only the block", "[prompt]") {
  const std::string parent = program("import torch\n", "old()\n", "tail()\n");
  CHECK(merge_block(parent, "old()\n", kMarkers) == parent);
  const std::string child = merge_block(parent, "x = 1", kMarkers);
  CHECK(child == program("import torch\n", "x = 1\n", "tail()\n"));
  CHECK(locked_regions_equal(parent, child, kMarkers));
  CHECK(merge_block(parent, "", kMarkers) == program("import torch\n", "", "tail()\n"));
  CHECK(code_of([] { merge_block("no block\n", "x\n", kMarkers); }) == ErrorCode::parent_block_malformed);
  CHECK(code_of([&] { merge_block(parent, kMarkers.end_marker + "\n", kMarkers); }) ==
        ErrorCode::locked_region_violation);
  CHECK_FALSE(locked_regions_equal(parent, program("import numpy\n", "old()\n", "tail()\n"), kMarkers));
}

TEST_CASE("merge and extract are inverse on random pairs", "[prompt]") {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const std::string prefix = random_text(rng, 5), suffix = random_text(rng, 5);
    const std::string parent = program(prefix, random_text(rng, 5), suffix);
    const std::string block = random_text(rng, 8);
    const std::string child = merge_block(parent, block, kMarkers);
    REQUIRE(extract_evolve_block(child, kMarkers).block == block);
    REQUIRE(child.substr(0, prefix.size()) == prefix);
    REQUIRE(child.substr(child.size() - suffix.size()) == suffix);
    REQUIRE(locked_regions_equal(parent, child, kMarkers));
    REQUIRE(merge_block(parent, extract_evolve_block(parent, kMarkers).block, kMarkers) == parent);
  }
}

TEST_CASE("token budget drops history in order", "[prompt]") {
  const std::string system = render_system_prompt(simple_task(), {});
  UserPromptContext ctx = base_context();
  ctx.previous = {view("old", 3.0, std::string(400, 'a') + "\n"), view("mid", 3.0, std::string(400, 'b') + "\n"),
                  view("new", 3.0, std::string(400, 'c') + "\n")};
  ctx.top = {view("t-hi", 9.0, std::string(400, 'd') + "\n"), view("t-lo", 2.5, std::string(400, 'e') + "\n")};
  const PromptBundle full = make_bundle(system, ctx);
  CHECK(full.token_count_estimate ==
        (system.size() + 3) / 4 + (full.user_text.size() + 3) / 4);

  CHECK(enforce_token_budget(full, full.token_count_estimate).user_text == full.user_text);

  UserPromptContext one_less = ctx;
  one_less.previous.erase(one_less.previous.begin());
  const std::size_t cap1 = make_bundle(system, one_less).token_count_estimate;
  const PromptBundle b1 = enforce_token_budget(full, cap1);
  CHECK(b1.included_previous == std::vector<std::string>{"mid", "new"});
  CHECK(b1.included_top == std::vector<std::string>{"t-hi", "t-lo"});
  CHECK(b1.token_count_estimate <= cap1);

  UserPromptContext no_prev = ctx;
  no_prev.previous.clear();
  no_prev.top.pop_back();
  const std::size_t cap2 = make_bundle(system, no_prev).token_count_estimate;
  const PromptBundle b2 = enforce_token_budget(full, cap2);
  CHECK(b2.included_previous.empty());
  CHECK(b2.included_top == std::vector<std::string>{"t-hi"});
  CHECK(b2.user_text.find(ctx.current.full_source) != std::string::npos);
}

TEST_CASE("token budget truncates long error logs, then gives up", "[prompt]") {
  const std::string system = render_system_prompt(simple_task(), {});
  UserPromptContext ctx = base_context();
  ctx.current_eval = EvalResult{};
  ctx.current_eval.candidate_id = ctx.current.candidate_id;
  ctx.current_eval.compiled = true;
  ctx.current_eval.stage = Stage::runtime_error;
  ctx.current_eval.score = 1.0;
  ctx.current_eval.error_log = "HEAD" + std::string(20000, 'x') + "TAIL";
  const PromptBundle full = make_bundle(system, ctx);
  const PromptBundle cut = enforce_token_budget(full, full.token_count_estimate - 1);
  CHECK(cut.context.error_log_truncated);
  CHECK(cut.user_text.find("HEAD") == std::string::npos);
  CHECK(cut.user_text.find(std::string(1996, 'x') + "TAIL") != std::string::npos);
  CHECK(cut.token_count_estimate < full.token_count_estimate);

  CHECK(code_of([&] { enforce_token_budget(full, 10); }) == ErrorCode::irreducible_prompt);
}
