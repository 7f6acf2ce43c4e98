// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

// One PASS/FAIL line per acceptance criterion. Every criterion carries a
// pinned runtime limit; exceeding it is a failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kevolve/archive/archive.hpp"
#include "kevolve/core/rng.hpp"
#include "kevolve/core/score.hpp"
#include "kevolve/core/serialization.hpp"
#include "kevolve/eval/eval_service.hpp"
#include "kevolve/eval/http_api.hpp"
#include "kevolve/eval/timing.hpp"
#include "kevolve/evolve/controller.hpp"
#include "kevolve/prompt/evolve_block.hpp"
#include "kevolve/report/report.hpp"
#include "kevolve/training/extractor.hpp"
#include "test_support.hpp"

using namespace kevolve;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = KEVOLVE_FIXTURES;

// Collects the first failed expectation of a criterion.
struct Check {
  std::string failure;
  void expect(bool ok, const std::string& what) {
    if (!ok && failure.empty()) failure = what;
  }
  bool ok() const { return failure.empty(); }
};

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

std::string num(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

// ---- metrics -------------------------------------------------------------

void metrics_oracle(Check& c) {
  Rng rng(7);
  for (int trial = 0; trial < 200 && c.ok(); ++trial) {
    std::vector<MetricInput> rs(1 + rng.index(40));
    for (auto& r : rs) {
      r.correct = rng.uniform01() < 0.75;
      r.hack_detected = rng.uniform01() < 0.1;
      const double u = rng.uniform01();
      if (u < 0.1)
        r.speedup.reset();
      else if (u < 0.3)
        r.speedup = static_cast<double>(rng.index(4));
      else
        r.speedup = rng.uniform01() * 6.0;
    }
    // Brute force: recount each quantity from scratch per threshold.
    const double n = static_cast<double>(rs.size());
    auto count_if = [&](const std::function<bool(const MetricInput&)>& f) {
      std::size_t k = 0;
      for (const auto& r : rs) k += f(r) ? 1 : 0;
      return static_cast<double>(k);
    };
    auto valid = [](const MetricInput& r) { return r.correct && !r.hack_detected; };
    const double corr = 100.0 * count_if(valid) / n;
    double amsr = 0.0;
    for (const auto& r : rs)
      if (valid(r) && r.speedup && *r.speedup >= 1.0) amsr += *r.speedup;
    amsr /= n;
    const MetricsSummary m = compute_metrics(rs);
    c.expect(m.corr == corr, "corr mismatch in trial " + std::to_string(trial));
    for (double p : {0.0, 1.0, 2.0}) {
      const double f = count_if([&](const MetricInput& r) { return valid(r) && r.speedup && *r.speedup > p; }) / n;
      c.expect(m.fast_p.at(p) == f, "fast_" + num(p) + " mismatch in trial " + std::to_string(trial));
    }
    c.expect(near(m.avg_amsr, amsr, 1e-12 * std::max(1.0, amsr)), "avg_amsr mismatch in trial " + std::to_string(trial));
  }
  const MetricsSummary a = compute_metrics({{true, false, 2.0}, {true, false, 0.5}, {true, false, 1.5}});
  c.expect(near(a.corr, 100.0, 5e-5) && near(a.fast_p.at(1.0), 0.6667, 5e-5) && near(a.avg_amsr, 1.1667, 5e-5),
           "hand vector [2.0, 0.5, 1.5]");
  const MetricsSummary b = compute_metrics({{true, true, 1.0}, {true, false, 2.0}});
  c.expect(near(b.corr, 50.0, 5e-5) && near(b.fast_p.at(1.0), 0.5, 5e-5) && near(b.avg_amsr, 1.0, 5e-5),
           "hand vector with one hacked result");
  const MetricsSummary z = compute_metrics({{false, false, 2.0}, {false, false, std::nullopt}});
  c.expect(z.corr == 0.0 && z.fast_p.at(1.0) == 0.0 && z.avg_amsr == 0.0, "hand vector all incorrect");
}

// ---- score ---------------------------------------------------------------

void score_ordering(Check& c) {
  Rng rng(11);
  for (int i = 0; i < 1000 && c.ok(); ++i) {
    ScoreWeights w{rng.uniform01() * 5.0, rng.uniform01() * 5.0, rng.uniform01() * 5.0, 0.5 + rng.uniform01() * 50.0};
    const double s1 = 1e-3 + rng.uniform01() * 80.0;
    const double s2 = s1 + rng.uniform01() * 20.0;
    const double none = compute_score({false, false, false}, std::nullopt, w);
    const double compiled = compute_score({true, false, false}, std::nullopt, w);
    const double hacked = compute_score({true, false, true}, std::nullopt, w);
    const double hacked_correct = compute_score({true, true, true}, std::nullopt, w);
    const double v1 = compute_score({true, true, false}, s1, w);
    const double v2 = compute_score({true, true, false}, s2, w);
    const std::string at = " at draw " + std::to_string(i);
    c.expect(none == 0.0, "uncompiled score is not 0" + at);
    c.expect(compiled == w.compile_credit && hacked == compiled && hacked_correct == compiled,
             "compiled-but-invalid score is not the compile credit" + at);
    c.expect(none <= compiled && compiled <= v1, "penalty ordering violated" + at);
    c.expect(v1 <= v2, "score decreased with speedup" + at);
    const double expect1 = w.compile_credit + w.correct_credit + w.speedup_weight * std::min(s1, w.speedup_cap);
    c.expect(near(v1, expect1, 1e-12 * std::max(1.0, expect1)), "valid score off the linear form" + at);
  }
}

// ---- archive -------------------------------------------------------------

CandidateProgram sized_program(const std::string& id, std::uint32_t island, std::size_t chars) {
  CandidateProgram p;
  p.candidate_id = id;
  p.task_id = "t";
  p.generation = 1;
  p.parent_id = "seed";
  p.island = island;
  p.evolve_block = std::string(chars, 'k');
  p.full_source = p.evolve_block;
  return p;
}

void archive_elitism(Check& c) {
  ArchiveConfig cfg;
  cfg.island_count = 4;
  cfg.rng_seed = 77;
  Archive archive(cfg);
  Rng rng(21);
  std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>, double> oracle;
  for (int i = 0; i < 1000; ++i) {
    const auto island = static_cast<std::uint32_t>(rng.index(4));
    const std::size_t chars = 1 + rng.index(70000);
    const double score = std::round(rng.uniform01() * 110.0) / 10.0;
    const std::string id = "a" + std::to_string(i);
    archive.insert(sized_program(id, island, chars), testing_support::eval_with_score(id, score),
                   static_cast<std::uint32_t>(i));
    const auto cbin = static_cast<std::uint32_t>(
        std::min(9.0L, std::floor(10.0L * std::log1p(static_cast<long double>(chars)) / std::log(65537.0L))));
    const auto sbin = static_cast<std::uint32_t>(std::clamp(std::floor(score), 0.0, 9.0));
    auto [it, fresh] = oracle.emplace(std::make_tuple(island, cbin, sbin), score);
    if (!fresh) it->second = std::max(it->second, score);
  }
  std::size_t mismatches = archive.size() == oracle.size() ? 0 : 1;
  for (const auto& [key, entry] : archive.entries()) {
    const auto it = oracle.find({key.island, key.complexity_bin, key.score_bin});
    if (it == oracle.end() || it->second != entry.score) ++mismatches;
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " cells disagree with the per-cell max oracle");

  auto trace = [](Archive a) {
    std::vector<std::string> out;
    for (int i = 0; i < 200; ++i) {
      const auto island = static_cast<std::uint32_t>(i % 4);
      out.push_back(a.sample_parent(island).candidate_id);
      for (const auto& e : a.sample_inspirations(island, 3, 2)) out.push_back(e.candidate_id);
    }
    return out;
  };
  c.expect(trace(archive) == trace(archive), "seeded sampling sequences differ between runs");

  Archive copy = archive;
  for (int i = 0; i < 200 && c.ok(); ++i) {
    const auto picks = copy.sample_inspirations(static_cast<std::uint32_t>(i % 4), 3, 2);
    std::set<CellKey> keys;
    std::set<std::string> ids;
    for (const auto& e : picks) {
      keys.insert(e.key);
      ids.insert(e.candidate_id);
    }
    c.expect(keys.size() == picks.size() && ids.size() == picks.size(), "inspiration list repeats a cell or candidate");
    for (std::size_t k = 1; k < std::min<std::size_t>(3, picks.size()); ++k)
      c.expect(picks[k - 1].score >= picks[k].score, "elite portion not in descending score order");
  }
}

// ---- evolve block --------------------------------------------------------

std::string random_lines(Rng& rng, std::size_t max_lines) {
  static const char* atoms[] = {"a", "=", "tl.load(p)", " ", "\t", "#", "@triton.jit", "def f():", "return x",
                                "\xe2\x88\x91", "EVOLVE", "BLOCK", "```"};
  std::string out;
  for (std::size_t n = rng.index(max_lines + 1); n > 0; --n) {
    std::string line;
    for (std::size_t k = rng.index(7); k > 0; --k) line += atoms[rng.index(std::size(atoms))];
    out += line + "\n";
  }
  return out;
}

ErrorCode extract_error(const std::string& text) {
  try {
    extract_evolve_block(text, BlockMarkers{});
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::invalid_argument;
}

void block_fuzz(Check& c) {
  const BlockMarkers m;
  const std::string start = m.start_marker + "\n", end = m.end_marker + "\n";
  Rng rng(5);
  for (int i = 0; i < 1000 && c.ok(); ++i) {
    const std::string prefix = random_lines(rng, 6), suffix = random_lines(rng, 6);
    const std::string parent = prefix + start + random_lines(rng, 6) + end + suffix;
    const std::string block = random_lines(rng, 10);
    const std::string child = merge_block(parent, block, m);
    const auto back = extract_evolve_block(child, m);
    c.expect(back.block == block, "extract(merge(parent, block)) != block at pair " + std::to_string(i));
    c.expect(child.compare(0, prefix.size(), prefix) == 0 &&
                 child.compare(child.size() - suffix.size(), suffix.size(), suffix) == 0,
             "locked bytes changed at pair " + std::to_string(i));
    c.expect(child == prefix + start + block + end + suffix, "merged layout differs at pair " + std::to_string(i));
  }
  for (int i = 0; i < 100 && c.ok(); ++i) {
    const std::string body = random_lines(rng, 5);
    c.expect(extract_error(body) == ErrorCode::no_block, "zero-marker corpus");
    c.expect(extract_error(start + body) == ErrorCode::no_block, "start-only corpus");
    c.expect(extract_error(start + start + body + end) == ErrorCode::ambiguous_block, "two-start corpus");
    c.expect(extract_error(start + body + end + end) == ErrorCode::ambiguous_block, "two-end corpus");
    c.expect(extract_error(end + body + start) == ErrorCode::inverted_markers, "inverted corpus");
  }
}

// ---- timing --------------------------------------------------------------

void robust_timing(Check& c) {
  const std::vector<double> flat{100, 100, 100, 100};
  const TimingStats a = robust_stats(flat);
  c.expect(a.trimmed_mean == 100.0 && a.cv == 0.0 && a.dropped_count == 0, "constant samples");

  const std::vector<double> planted{100, 102, 98, 101, 99, 1000};
  const TimingStats b = robust_stats(planted);
  const Quartiles q = tukey_fences(planted);
  c.expect(near(q.q1, 99.25, 1e-12) && near(q.q3, 101.75, 1e-12) && near(q.upper_fence, 105.5, 1e-12),
           "quartiles of the planted-outlier set");
  c.expect(b.dropped_count == 1 && b.kept_count == 5 && near(b.trimmed_mean, 100.0, 1e-12), "planted outlier kept");

  const std::vector<double> two{5, 7};
  const TimingStats d = robust_stats(two);
  c.expect(d.kept_count == 2 && near(d.trimmed_mean, 6.0, 1e-12), "two-sample floor");

  const std::vector<double> both{50, 100, 101, 99, 100, 102, 98, 100, 100, 400};
  const TimingStats e = robust_stats(both);
  c.expect(e.dropped_count == 2 && near(e.trimmed_mean, 100.0, 1e-12), "outliers on both sides");

  TimingConfig cfg;
  cfg.stability_threshold = 0.01;
  auto with_cv = [](double cv) {
    TimingStats s;
    s.cv = cv;
    return s;
  };
  c.expect(check_stability(with_cv(0.005), cfg) == Stability::stable, "cv 0.005 should be stable");
  c.expect(check_stability(with_cv(0.010), cfg) == Stability::stable, "cv 0.010 should be stable");
  c.expect(check_stability(with_cv(0.011), cfg) == Stability::unstable, "cv 0.011 should be unstable");
}

// ---- end to end ----------------------------------------------------------

RunReport mock_run(const std::string& script, std::uint32_t iterations, const std::string& dir) {
  const TaskSpec task = load_task_file(kFixtures + "/halving/task.json");
  EvalService service;
  LlmClient llm(ScriptedMock::from_file(kFixtures + "/halving/" + script), {}, std::make_shared<AuditLog>(),
                [](double) {});
  RunConfig config;
  config.iterations = iterations;
  config.run_id = "acceptance";
  EvolutionController controller(task, config, service, llm,
                                 {PromptTemplates::defaults(), testing_support::fixed_clock(), dir});
  return controller.run();
}

void end_to_end(Check& c) {
  testing_support::TempDir first, second, rejecting;
  const RunReport r = mock_run("mock.json", 3, first.str());
  std::size_t accepted = 0;
  double last = r.seed_eval.score;
  for (const auto& s : r.steps) {
    if (!s.accepted()) continue;
    ++accepted;
    c.expect(s.child_eval->score > last, "accepted-step scores not strictly increasing");
    last = s.child_eval->score;
  }
  c.expect(accepted == 3, "expected 3 accepted steps, got " + std::to_string(accepted));
  c.expect(r.final_best.speedup && *r.final_best.speedup == 8.0,
           "final speedup " + (r.final_best.speedup ? num(*r.final_best.speedup) : std::string("absent")));
  for (std::size_t i = 1; i < r.best_score_curve.size(); ++i)
    c.expect(r.best_score_curve[i].best_score >= r.best_score_curve[i - 1].best_score, "curve decreased");

  mock_run("mock.json", 3, second.str());
  for (const char* f : {"run.json", "archive.json", "curve.csv"})
    c.expect(read_text_file((first.path() / f).string()) == read_text_file((second.path() / f).string()),
             std::string("replay differs in ") + f);

  const RunReport rej = mock_run("reject_mock.json", 5, rejecting.str());
  std::size_t rej_accepted = 0;
  for (const auto& s : rej.steps) rej_accepted += s.accepted() ? 1 : 0;
  c.expect(rej_accepted == 0, "all-reject script accepted a step");
  for (const auto& p : rej.best_score_curve)
    c.expect(p.best_score == rej.seed_eval.score, "all-reject curve is not flat");
}

// ---- training ------------------------------------------------------------

EvalResult timed(const std::string& id, double ns, bool correct = true) {
  EvalResult e;
  e.candidate_id = id;
  e.compiled = true;
  e.correct = correct;
  e.stage = correct ? Stage::passed : Stage::correctness_error;
  TimingStats t;
  t.raw_samples = {ns};
  t.kept_count = 1;
  t.trimmed_mean = ns;
  e.candidate_timing = t;
  if (correct) e.speedup = 100.0 / ns;
  e.score = compute_score({true, correct, false}, e.speedup);
  return e;
}

// Persists a hand-built run: seed at 3, then children scoring 4, 3.5, 5, 5
// (iterations 1..4), an incorrect child and a unit-speedup child.
RunReport write_synthetic_run(const fs::path& dir) {
  RunReport r;
  r.run_id = "synthetic";
  r.task_id = "toy";
  r.seed = testing_support::seed_candidate();
  r.seed_eval = timed(r.seed.candidate_id, 100);
  struct Plan {
    std::string parent;
    double ns;
    bool correct;
  };
  const std::vector<Plan> plan = {{"toy/c0000", 50, true},     {"toy/c0001", 200.0 / 3.0, true},
                                  {"toy/c0001", 100.0 / 3.0, true}, {"toy/c0003", 100.0 / 3.0, true},
                                  {"toy/c0003", 25, false},    {"toy/c0002", 100, true}};
  std::map<std::string, CandidateProgram> known{{r.seed.candidate_id, r.seed}};
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto it = static_cast<std::uint32_t>(i + 1);
    char id[32];
    std::snprintf(id, sizeof id, "toy/c%04u", it);
    TrajectoryStep s;
    s.iteration = it;
    s.parent_id = plan[i].parent;
    s.child = testing_support::child_of(known.at(plan[i].parent), id, "kernel_v" + std::to_string(it) + "()\n");
    s.child_eval = timed(id, plan[i].ns, plan[i].correct);
    known[id] = *s.child;
    const fs::path step = dir / "steps" / step_dir_name(it);
    write_text_file((step / "system.txt").string(), "system\n");
    write_text_file((step / "prompt.txt").string(), "prompt for step " + std::to_string(it) + "\n");
    write_text_file((step / "generation.txt").string(), "generation " + std::to_string(it) + "\n");
    r.steps.push_back(std::move(s));
  }
  r.best_score_curve = best_score_curve(r);
  write_text_file((dir / "run.json").string(), nlohmann::json(r).dump(2) + "\n");
  return r;
}

void training_extraction(Check& c) {
  testing_support::TempDir dir;
  const RunReport report = write_synthetic_run(dir.path());
  const auto drafts = decompose(dir.str(), Difficulty::easy);
  c.expect(drafts.size() == 6, "expected 6 drafts, got " + std::to_string(drafts.size()));

  std::set<std::uint32_t> best;
  for (const auto& s : select_best_steps(drafts)) best.insert(s.source_step.iteration);
  c.expect(best == std::set<std::uint32_t>{3}, "best-step set is not {3}");

  // Re-derive the performance set from the stored evals.
  std::set<std::uint32_t> expected_perf, perf;
  for (const auto& s : report.steps)
    if (s.parent_id != report.seed.candidate_id && s.child_eval->correct && s.child_eval->speedup &&
        *s.child_eval->speedup > 1.0)
      expected_perf.insert(s.iteration);
  for (const auto& s : filter_performance(drafts)) perf.insert(s.source_step.iteration);
  c.expect(expected_perf == std::set<std::uint32_t>{2, 3, 4}, "synthetic run lost its performance steps");
  c.expect(perf == expected_perf, "performance filter kept the wrong steps");

  TrainingSample leaky = filter_performance(drafts).at(0);
  TrainingSample clean = leaky;
  clean.sample_id += "/clean";
  clean.context_ids.clear();
  leaky.context_ids = {"toy/c0003"};
  const auto audit = audit_leakage({leaky, clean}, catalog_of(report));
  c.expect(audit.dropped.size() == 1 && audit.dropped[0].sample_id == leaky.sample_id && audit.kept.size() == 1,
           "leakage audit did not drop exactly the leaky sample");

  const RLGroup g = grpo_rewards(timed("p", 100), {timed("a", 50), timed("b", 80, false), timed("c", 100)});
  c.expect(g.members.size() == 3 && g.members[0].reward == 2.0 && g.members[1].reward == 0.0 &&
               g.members[2].reward == 1.0,
           "grpo rewards differ from (2.0, 0, 1.0)");
}

// ---- service -------------------------------------------------------------

void service_contract(Check& c) {
  EvalService service({2, 64, {}});
  EvalHttpServer server(service);
  const int port = server.start("127.0.0.1", 0);
  HttpEvalClient client("http://127.0.0.1:" + std::to_string(port), 30.0);
  TaskSpec task = testing_support::simple_task();
  task.test_input_spec["noise_seed"] = 4;
  std::vector<CandidateProgram> cands;
  for (int i = 0; i < 8; ++i)
    cands.push_back(testing_support::child_of(
        testing_support::seed_candidate(task), "toy/j" + std::to_string(i),
        "# @sim runtime_ns=" + std::to_string(30 + 7 * i) + " noise_cv=0.002\nkernel_" + std::to_string(i) + "()\n"));

  std::vector<std::future<EvalResult>> sync, async;
  for (const auto& cand : cands) {
    sync.push_back(std::async(std::launch::async, [&, cand] {
      HttpEvalClient own("http://127.0.0.1:" + std::to_string(port), 30.0);
      return own.evaluate(task, cand);
    }));
    async.push_back(std::async(std::launch::async, [&, cand] {
      HttpEvalClient own("http://127.0.0.1:" + std::to_string(port), 30.0);
      const std::string id = own.submit_job(task, cand);
      for (;;) {
        const EvalJob j = own.poll_job(id);
        if (j.state == EvalJob::State::done && j.result) return *j.result;
        if (j.state == EvalJob::State::failed) throw Error(ErrorCode::backend_unavailable, j.error);
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
    }));
  }
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const EvalResult a = sync[i].get(), b = async[i].get();
    c.expect(nlohmann::json(a).dump() == nlohmann::json(b).dump(), "job " + std::to_string(i) + " differs");
    c.expect(a.stage == Stage::passed, "job " + std::to_string(i) + " did not pass");
  }
  server.stop();
}

struct Criterion {
  const char* name;
  double limit_s;
  void (*run)(Check&);
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"metrics-oracle", 5.0, metrics_oracle},     {"score-ordering", 5.0, score_ordering},
      {"archive-elitism-determinism", 10.0, archive_elitism}, {"evolve-block-fuzz", 10.0, block_fuzz},
      {"robust-timing", 1.0, robust_timing},      {"end-to-end-mock-evolution", 30.0, end_to_end},
      {"training-extraction", 5.0, training_extraction},     {"service-contract", 30.0, service_contract},
  };
  int failures = 0;
  for (const auto& cr : criteria) {
    Check check;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    check.expect(secs <= cr.limit_s, "took " + num(secs) + " s");
    std::printf("%s %-28s %8.3f s (limit %.0f s)%s%s\n", check.ok() ? "PASS" : "FAIL", cr.name, secs, cr.limit_s,
                check.ok() ? "" : ": ", check.failure.c_str());
    if (!check.ok()) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
