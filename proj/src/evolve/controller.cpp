// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/evolve/controller.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <utility>

#include "kevolve/core/error.hpp"
#include "kevolve/core/serialization.hpp"
#include "kevolve/prompt/evolve_block.hpp"

namespace kevolve {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::invalid_argument, "iterations must be >= 1");
  if (input_token_cap == 0) throw Error(ErrorCode::invalid_argument, "input_token_cap must be > 0");
  decoding.validate();
  archive.validate();
}

void to_json(nlohmann::json& j, const RunConfig& v) {
  j = nlohmann::json{{"iterations", v.iterations},
                     {"decoding", v.decoding},
                     {"archive", v.archive},
                     {"input_token_cap", v.input_token_cap},
                     {"seed", v.seed},
                     {"stop_on_score", v.stop_on_score ? nlohmann::json(*v.stop_on_score)
                                                       : nlohmann::json(nullptr)},
                     {"previous_k", v.previous_k},
                     {"strict_locked_regions", v.strict_locked_regions},
                     {"run_id", v.run_id}};
}

void from_json(const nlohmann::json& j, RunConfig& v) {
  RunConfig d;
  v.iterations = j.value("iterations", d.iterations);
  v.decoding = j.contains("decoding") ? j.at("decoding").get<DecodingConfig>() : d.decoding;
  v.archive = j.contains("archive") ? j.at("archive").get<ArchiveConfig>() : d.archive;
  v.input_token_cap = j.value("input_token_cap", d.input_token_cap);
  v.seed = j.value("seed", d.seed);
  v.stop_on_score.reset();
  if (j.contains("stop_on_score") && !j.at("stop_on_score").is_null())
    v.stop_on_score = j.at("stop_on_score").get<double>();
  v.previous_k = j.value("previous_k", d.previous_k);
  v.strict_locked_regions = j.value("strict_locked_regions", d.strict_locked_regions);
  v.run_id = j.value("run_id", d.run_id);
}

std::string_view to_string(RejectionReason reason) {
  switch (reason) {
    case RejectionReason::no_block: return "no_block";
    case RejectionReason::ambiguous_block: return "ambiguous_block";
    case RejectionReason::locked_region_violation: return "locked_region_violation";
    case RejectionReason::output_truncated: return "output_truncated";
    case RejectionReason::prompt_over_budget: return "prompt_over_budget";
  }
  return "unknown";
}

RejectionReason rejection_from_string(std::string_view name) {
  for (auto r : {RejectionReason::no_block, RejectionReason::ambiguous_block,
                 RejectionReason::locked_region_violation, RejectionReason::output_truncated,
                 RejectionReason::prompt_over_budget})
    if (to_string(r) == name) return r;
  throw Error(ErrorCode::parse_error, "unknown rejection reason: " + std::string(name));
}

namespace {

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const GenerationRef& v) {
  j = nlohmann::json{{"prompt_hash", v.prompt_hash},
                     {"model_id", v.model_id},
                     {"attempt", v.attempt},
                     {"output_truncated", v.output_truncated},
                     {"usage", v.usage}};
}

void from_json(const nlohmann::json& j, GenerationRef& v) {
  v.prompt_hash = j.at("prompt_hash").get<std::string>();
  v.model_id = j.at("model_id").get<std::string>();
  v.attempt = j.at("attempt").get<std::uint32_t>();
  v.output_truncated = j.at("output_truncated").get<bool>();
  v.usage = j.at("usage").get<TokenUsage>();
}

void to_json(nlohmann::json& j, const TrajectoryStep& v) {
  j = nlohmann::json{{"iteration", v.iteration},
                     {"island", v.island},
                     {"parent_id", v.parent_id},
                     {"inspiration_ids", v.inspiration_ids},
                     {"previous_ids", v.previous_ids},
                     {"prompt_hash", v.prompt_hash},
                     {"generation_ref", opt_json(v.generation_ref)},
                     {"child", opt_json(v.child)},
                     {"child_eval", opt_json(v.child_eval)},
                     {"rejection_reason", v.rejection_reason
                                              ? nlohmann::json(to_string(*v.rejection_reason))
                                              : nlohmann::json(nullptr)},
                     {"rejection_detail", v.rejection_detail}};
}

void from_json(const nlohmann::json& j, TrajectoryStep& v) {
  v.iteration = j.at("iteration").get<std::uint32_t>();
  v.island = j.at("island").get<std::uint32_t>();
  v.parent_id = j.at("parent_id").get<std::string>();
  v.inspiration_ids = j.at("inspiration_ids").get<std::vector<std::string>>();
  v.previous_ids = j.value("previous_ids", std::vector<std::string>{});
  v.prompt_hash = j.at("prompt_hash").get<std::string>();
  v.generation_ref = opt_get<GenerationRef>(j, "generation_ref");
  v.child = opt_get<CandidateProgram>(j, "child");
  v.child_eval = opt_get<EvalResult>(j, "child_eval");
  v.rejection_reason.reset();
  if (auto r = opt_get<std::string>(j, "rejection_reason")) v.rejection_reason = rejection_from_string(*r);
  v.rejection_detail = j.value("rejection_detail", std::string{});
  if (v.child.has_value() != v.child_eval.has_value() ||
      v.child.has_value() == v.rejection_reason.has_value())
    throw Error(ErrorCode::parse_error,
                "trajectory step needs either child and child_eval or a rejection reason");
}

void to_json(nlohmann::json& j, const CurvePoint& v) {
  j = nlohmann::json{{"iteration", v.iteration},
                     {"best_score", v.best_score},
                     {"best_speedup", v.best_speedup}};
}

void from_json(const nlohmann::json& j, CurvePoint& v) {
  v.iteration = j.at("iteration").get<std::uint32_t>();
  v.best_score = j.at("best_score").get<double>();
  v.best_speedup = j.value("best_speedup", 0.0);
}

void to_json(nlohmann::json& j, const RunReport& v) {
  j = nlohmann::json{{"run_id", v.run_id},
                     {"task_id", v.task_id},
                     {"seed", v.seed},
                     {"seed_eval", v.seed_eval},
                     {"steps", v.steps},
                     {"best_score_curve", v.best_score_curve},
                     {"final_best",
                      {{"candidate_id", v.final_best.candidate_id},
                       {"score", v.final_best.score},
                       {"speedup", opt_json(v.final_best.speedup)}}},
                     {"wall_clock_s", v.wall_clock_s}};
}

void from_json(const nlohmann::json& j, RunReport& v) {
  v.run_id = j.value("run_id", std::string{});
  v.task_id = j.at("task_id").get<std::string>();
  v.seed = j.at("seed").get<CandidateProgram>();
  v.seed_eval = j.at("seed_eval").get<EvalResult>();
  v.steps = j.at("steps").get<std::vector<TrajectoryStep>>();
  v.best_score_curve = j.at("best_score_curve").get<std::vector<CurvePoint>>();
  const auto& fb = j.at("final_best");
  v.final_best.candidate_id = fb.at("candidate_id").get<std::string>();
  v.final_best.score = fb.at("score").get<double>();
  v.final_best.speedup = opt_get<double>(fb, "speedup");
  v.wall_clock_s = j.value("wall_clock_s", 0.0);
}

std::vector<CurvePoint> best_score_curve(const RunReport& report) {
  std::vector<CurvePoint> curve;
  curve.reserve(report.steps.size() + 1);
  auto passed_speedup = [](const EvalResult& e) {
    return e.stage == Stage::passed && e.speedup ? *e.speedup : 0.0;
  };
  CurvePoint point{0, report.seed_eval.score, passed_speedup(report.seed_eval)};
  curve.push_back(point);
  for (const auto& step : report.steps) {
    point.iteration = step.iteration;
    if (step.child_eval) {
      point.best_score = std::max(point.best_score, step.child_eval->score);
      point.best_speedup = std::max(point.best_speedup, passed_speedup(*step.child_eval));
    }
    curve.push_back(point);
  }
  return curve;
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "iteration,best_score,best_speedup\n";
  for (const auto& p : curve)
    out += std::to_string(p.iteration) + "," + format_number(p.best_score) + "," +
           format_number(p.best_speedup) + "\n";
  return out;
}

std::string step_dir_name(std::uint32_t iteration) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03u", iteration);
  return buf;
}

EvolutionController::EvolutionController(TaskSpec task, RunConfig config, Evaluator& evaluator,
                                         LlmClient& llm, Options options)
    : task_(std::move(task)),
      config_(std::move(config)),
      evaluator_(evaluator),
      llm_(llm),
      options_(std::move(options)),
      archive_([this] {
        ArchiveConfig a = config_.archive;
        a.rng_seed = config_.seed;
        return a;
      }()) {
  task_.validate();
  config_.validate();
  if (!options_.now)
    options_.now = [] {
      return std::chrono::time_point_cast<std::chrono::nanoseconds>(
          std::chrono::system_clock::now());
    };
}

std::string EvolutionController::next_candidate_id(std::uint32_t iteration) const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%04u", iteration);
  return task_.task_id + "/" + buf;
}

std::pair<CandidateProgram, EvalResult> EvolutionController::seed_run() {
  if (seed_) return {seed_->program, seed_->eval};
  const std::string source = wrap_in_block(task_.reference_source, task_.markers);
  CandidateProgram seed;
  seed.candidate_id = next_candidate_id(0);
  seed.task_id = task_.task_id;
  seed.generation = 0;
  seed.island = 0;
  seed.full_source = source;
  seed.evolve_block = extract_evolve_block(source, task_.markers).block;
  seed.model_id = "reference";
  seed.prompt_hash = "";
  seed.created_at = options_.now();

  EvalResult eval = evaluator_.evaluate(task_, seed);
  for (std::uint32_t island = 0; island < archive_.config().island_count; ++island)
    archive_.insert_into(island, seed, eval, 0);

  seed_ = ProgramView{seed, eval};
  known_[seed.candidate_id] = *seed_;
  system_prompt_ = render_system_prompt(task_, eval.hardware_metadata, options_.templates);

  if (!options_.run_dir.empty()) {
    const fs::path dir = fs::path(options_.run_dir) / "steps" / step_dir_name(0);
    write_text_file((fs::path(options_.run_dir) / "task.json").string(),
                    nlohmann::json(task_).dump(2) + "\n");
    write_text_file((dir / "system.txt").string(), system_prompt_);
    write_text_file((dir / "candidate.txt").string(), seed.full_source);
    write_text_file((dir / "eval.json").string(), nlohmann::json(eval).dump(2) + "\n");
  }
  return {seed, eval};
}

void EvolutionController::persist_step(const TrajectoryStep& step, const std::string& system,
                                       const std::string& user,
                                       const std::string* generation) const {
  if (options_.run_dir.empty()) return;
  const fs::path dir = fs::path(options_.run_dir) / "steps" / step_dir_name(step.iteration);
  write_text_file((dir / "system.txt").string(), system);
  write_text_file((dir / "prompt.txt").string(), user);
  if (generation) write_text_file((dir / "generation.txt").string(), *generation);
  if (step.child) write_text_file((dir / "candidate.txt").string(), step.child->full_source);
  if (step.child_eval)
    write_text_file((dir / "eval.json").string(), nlohmann::json(*step.child_eval).dump(2) + "\n");
  write_text_file((dir / "step.json").string(), nlohmann::json(step).dump(2) + "\n");
}

TrajectoryStep EvolutionController::step(std::uint32_t iteration) {
  const std::uint32_t islands = archive_.config().island_count;
  TrajectoryStep step;
  step.iteration = iteration;
  step.island = (iteration - 1) % islands;

  archive_.migrate(iteration);
  const CandidateProgram parent = archive_.sample_parent(step.island);
  step.parent_id = parent.candidate_id;
  const EvalResult parent_eval = archive_.eval(parent.candidate_id);

  UserPromptContext context;
  context.target_class = task_.target_class_name;
  context.current = parent;
  context.current_eval = parent_eval;
  for (const auto& entry : archive_.sample_inspirations(step.island, archive_.config().top_k,
                                                        archive_.config().diverse_k)) {
    if (entry.candidate_id == parent.candidate_id) continue;
    context.top.push_back(ProgramView{archive_.candidate(entry.candidate_id),
                                      archive_.eval(entry.candidate_id)});
  }
  const auto& history = island_history_[step.island];
  const std::size_t from = history.size() > config_.previous_k ? history.size() - config_.previous_k : 0;
  for (std::size_t i = from; i < history.size(); ++i) context.previous.push_back(known_.at(history[i]));
  if (auto it = pending_feedback_.find(step.island); it != pending_feedback_.end()) {
    context.feedback_note = it->second;
    pending_feedback_.erase(it);
  }

  PromptBundle bundle;
  try {
    bundle = enforce_token_budget(make_bundle(system_prompt_, std::move(context), options_.templates),
                                  config_.input_token_cap, options_.templates);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::irreducible_prompt) throw;
    bundle = make_bundle(system_prompt_, UserPromptContext{}, options_.templates);
    step.prompt_hash = prompt_hash(system_prompt_, bundle.user_text);
    step.rejection_reason = RejectionReason::prompt_over_budget;
    step.rejection_detail = e.what();
    persist_step(step, system_prompt_, bundle.user_text, nullptr);
    return step;
  }
  step.inspiration_ids = bundle.included_top;
  step.previous_ids = bundle.included_previous;
  step.prompt_hash = prompt_hash(bundle.system_text, bundle.user_text);

  const CompletionRecord record = llm_.complete(bundle.system_text, bundle.user_text, config_.decoding);
  step.generation_ref = GenerationRef{record.prompt_hash, record.model_id, record.attempt,
                                      record.output_truncated, record.usage};

  auto reject = [&](RejectionReason reason, std::string detail) {
    step.rejection_reason = reason;
    step.rejection_detail = std::move(detail);
    pending_feedback_[step.island] = "the previous generation was rejected (" +
                                     std::string(to_string(reason)) + "): " + step.rejection_detail;
    persist_step(step, bundle.system_text, bundle.user_text, &record.output_text);
    return step;
  };

  if (record.output_truncated)
    return reject(RejectionReason::output_truncated, "generation hit the output token limit");

  ExtractedBlock extracted;
  try {
    extracted = extract_evolve_block(record.output_text, task_.markers);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::no_block:
      case ErrorCode::inverted_markers:
        return reject(RejectionReason::no_block, e.what());
      case ErrorCode::ambiguous_block:
        return reject(RejectionReason::ambiguous_block, e.what());
      default: throw;
    }
  }
  if (config_.strict_locked_regions &&
      !locked_regions_equal(parent.full_source, extracted.full_program, task_.markers))
    return reject(RejectionReason::locked_region_violation,
                  "generation modified code outside the evolve block");

  std::string merged;
  try {
    merged = merge_block(parent.full_source, extracted.block, task_.markers);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::locked_region_violation) throw;
    return reject(RejectionReason::locked_region_violation, e.what());
  }
  if (!locked_regions_equal(parent.full_source, merged, task_.markers))
    return reject(RejectionReason::locked_region_violation, "merged program altered locked regions");

  CandidateProgram child;
  child.candidate_id = next_candidate_id(iteration);
  child.task_id = task_.task_id;
  child.parent_id = parent.candidate_id;
  child.generation = parent.generation + 1;
  child.island = step.island;
  child.full_source = merged;
  child.evolve_block = extract_evolve_block(merged, task_.markers).block;
  child.model_id = record.model_id;
  child.prompt_hash = record.prompt_hash;
  child.created_at = options_.now();

  EvalResult eval = evaluator_.evaluate(task_, child);
  archive_.insert(child, eval, iteration);
  known_[child.candidate_id] = ProgramView{child, eval};
  island_history_[step.island].push_back(child.candidate_id);

  step.child = std::move(child);
  step.child_eval = std::move(eval);
  persist_step(step, bundle.system_text, bundle.user_text, &record.output_text);
  return step;
}

RunReport EvolutionController::run() {
  const Timestamp started = options_.now();
  seed_run();

  RunReport report;
  report.run_id = config_.run_id;
  report.task_id = task_.task_id;
  report.seed = seed_->program;
  report.seed_eval = seed_->eval;

  auto reached = [&](double best) { return config_.stop_on_score && best >= *config_.stop_on_score; };
  double best = seed_->eval.score;
  if (!reached(best)) {
    for (std::uint32_t i = 1; i <= config_.iterations; ++i) {
      report.steps.push_back(step(i));
      if (const auto& e = report.steps.back().child_eval) best = std::max(best, e->score);
      if (reached(best)) break;
    }
  }

  report.best_score_curve = best_score_curve(report);
  for (std::size_t i = 1; i < report.best_score_curve.size(); ++i)
    if (report.best_score_curve[i].best_score < report.best_score_curve[i - 1].best_score)
      throw Error(ErrorCode::invalid_argument, "best score curve decreased");

  // Earliest candidate reaching the max wins ties.
  report.final_best = {seed_->program.candidate_id, seed_->eval.score, seed_->eval.speedup};
  for (const auto& s : report.steps)
    if (s.child_eval && s.child_eval->score > report.final_best.score)
      report.final_best = {s.child->candidate_id, s.child_eval->score, s.child_eval->speedup};

  report.wall_clock_s =
      std::chrono::duration<double>(options_.now() - started).count();

  if (!options_.run_dir.empty()) {
    const fs::path dir(options_.run_dir);
    write_text_file((dir / "run.json").string(), nlohmann::json(report).dump(2) + "\n");
    write_text_file((dir / "archive.json").string(), archive_.checkpoint().dump(2) + "\n");
    write_text_file((dir / "curve.csv").string(), curve_csv(report.best_score_curve));
  }
  return report;
}

}  // namespace kevolve
