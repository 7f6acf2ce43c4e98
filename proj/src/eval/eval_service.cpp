// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/eval/eval_service.hpp"

#include <cstdio>
#include <sstream>

#include "kevolve/core/error.hpp"
#include "kevolve/core/score.hpp"
#include "kevolve/core/serialization.hpp"

namespace kevolve {

std::optional<TimingStats> BaselineCache::get(const std::string& task_id,
                                              const std::string& backend_id) const {
  std::lock_guard lock(mutex_);
  auto it = stats_.find({task_id, backend_id});
  if (it == stats_.end()) return std::nullopt;
  return it->second;
}

void BaselineCache::put(const std::string& task_id, const std::string& backend_id,
                        TimingStats stats) {
  std::lock_guard lock(mutex_);
  stats_[{task_id, backend_id}] = std::move(stats);
}

void BaselineCache::invalidate(const std::string& task_id) {
  std::lock_guard lock(mutex_);
  std::erase_if(stats_, [&](const auto& kv) { return kv.first.first == task_id; });
}

namespace {

ExecutionMode mode_for(const TaskSpec& task, const BackendDescriptor& descriptor) {
  if (auto it = task.test_input_spec.find("execution_mode");
      task.test_input_spec.is_object() && it != task.test_input_spec.end())
    return execution_mode_from_string(it->get<std::string>());
  if (auto it = descriptor.capabilities.find("execution_mode"); it != descriptor.capabilities.end())
    return execution_mode_from_string(it->second);
  return ExecutionMode::inline_script;
}

std::string fatal_log(const FatalOutcome& fatal) {
  std::string log = fatal.phase + ": " + fatal.message;
  if (!fatal.traceback.empty()) log += "\n" + fatal.traceback;
  return log;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

EvalResult orchestrate_evaluation(const TaskSpec& task, const CandidateProgram& candidate,
                                  Backend& backend, const BackendDescriptor& descriptor,
                                  const ScoreWeights& weights, BaselineCache* cache) {
  task.validate();
  if (!candidate.task_id.empty() && candidate.task_id != task.task_id)
    throw Error(ErrorCode::invalid_argument, "candidate '" + candidate.candidate_id +
                                                 "' belongs to task '" + candidate.task_id + "'");

  SandboxRequest request;
  request.reference_source = task.reference_source;
  request.candidate_source = candidate.full_source;
  request.target_class_name = task.target_class_name;
  request.test_input_spec = task.test_input_spec;
  request.tolerance = task.tolerance;
  request.timing = task.timing;
  request.timeouts = task.timeouts;
  request.execution_mode = mode_for(task, descriptor);
  request.markers = task.markers;

  const bool measure_baseline = task.baseline_mode.kind == BaselineMode::Kind::measure_reference;
  std::optional<TimingStats> baseline;
  if (measure_baseline && cache) baseline = cache->get(task.task_id, descriptor.backend_id);

  request.phase_plan = {Phase::compile, Phase::correctness, Phase::hack};
  if (measure_baseline && !baseline) request.phase_plan.push_back(Phase::baseline_timing);
  request.phase_plan.push_back(Phase::candidate_timing);

  SandboxResponse response = backend.run(request);

  EvalResult result;
  result.candidate_id = candidate.candidate_id;
  result.hardware_metadata = descriptor.capabilities;
  for (const auto& [k, v] : response.hardware) result.hardware_metadata[k] = v;

  PhaseReport report;
  // A fatal before any compile report (e.g. the process deadline) counts
  // against the compile phase.
  const bool compile_fatal = response.fatal && (response.fatal->phase == "compile" || !response.compile);
  report.compile_ok = !compile_fatal && response.compile && response.compile->ok;
  report.execution_ok = !response.fatal;
  report.outputs_match = response.correctness && response.correctness->ok;
  report.kernel_executed = response.hack && response.hack->kernel_executed;

  std::optional<TimingStats> cand_stats;
  std::string timing_note;

  const auto stats_of = [&](const std::vector<double>& samples, const char* which) {
    if (samples.size() < 2) {
      report.execution_ok = false;
      timing_note = std::string("backend returned ") + std::to_string(samples.size()) + " " +
                    which + " timing samples";
      return std::optional<TimingStats>{};
    }
    try {
      return std::optional<TimingStats>(robust_stats(samples));
    } catch (const Error& e) {
      report.execution_ok = false;
      timing_note = std::string(which) + " timing: " + e.what();
      return std::optional<TimingStats>{};
    }
  };

  if (report.compile_ok && report.execution_ok && report.outputs_match && report.kernel_executed) {
    const TimingOutcome timing = response.timing.value_or(TimingOutcome{});
    if (measure_baseline && !baseline) baseline = stats_of(timing.baseline_samples_ns, "baseline");
    if (report.execution_ok) cand_stats = stats_of(timing.candidate_samples_ns, "candidate");

    const auto stable = [&](const std::optional<TimingStats>& s) {
      return s && check_stability(*s, task.timing) == Stability::stable;
    };
    std::uint32_t round = 0;
    while (report.execution_ok && (!stable(cand_stats) || (measure_baseline && !stable(baseline))) &&
           round < task.timing.max_retry_rounds) {
      ++round;
      SandboxRequest retry = request;
      retry.round = round;
      retry.phase_plan.clear();
      const bool redo_baseline = measure_baseline && !stable(baseline);
      if (redo_baseline) retry.phase_plan.push_back(Phase::baseline_timing);
      if (!stable(cand_stats)) retry.phase_plan.push_back(Phase::candidate_timing);
      SandboxResponse again = backend.run(retry);
      if (again.fatal) {
        report.execution_ok = false;
        response.fatal = again.fatal;
        break;
      }
      const TimingOutcome t = again.timing.value_or(TimingOutcome{});
      if (redo_baseline) baseline = stats_of(t.baseline_samples_ns, "baseline");
      if (report.execution_ok && !stable(cand_stats))
        cand_stats = stats_of(t.candidate_samples_ns, "candidate");
    }
    report.timing_stable = report.execution_ok && stable(cand_stats) &&
                           (!measure_baseline || stable(baseline));
    if (measure_baseline && cache && stable(baseline))
      cache->put(task.task_id, descriptor.backend_id, *baseline);
    if (report.execution_ok && !report.timing_stable) {
      std::ostringstream note;
      note << "timing unstable after " << round << " retries: candidate cv="
           << format_double(cand_stats ? cand_stats->cv : 0.0);
      if (measure_baseline) note << ", baseline cv=" << format_double(baseline ? baseline->cv : 0.0);
      note << " (threshold " << format_double(task.timing.stability_threshold) << ")";
      timing_note = note.str();
    }
  }

  result.stage = classify_stage(report);
  result.compiled = report.compile_ok;
  result.hack_detected = result.stage == Stage::hack_detected;
  result.correct = result.stage == Stage::passed || result.stage == Stage::unstable_timing;

  switch (result.stage) {
    case Stage::compile_error:
      if (compile_fatal)
        result.error_log = fatal_log(*response.fatal);
      else if (response.compile && !response.compile->log.empty())
        result.error_log = response.compile->log;
      else
        result.error_log = "compile phase did not report success";
      break;
    case Stage::runtime_error:
      result.error_log = response.fatal ? fatal_log(*response.fatal) : timing_note;
      break;
    case Stage::correctness_error: {
      std::ostringstream log;
      const auto c = response.correctness.value_or(CorrectnessOutcome{});
      log << "outputs diverged beyond tolerance (rtol=" << format_double(task.tolerance.relative_tol)
          << ", atol=" << format_double(task.tolerance.absolute_tol)
          << "): max_abs_err=" << format_double(c.max_abs_err)
          << " max_rel_err=" << format_double(c.max_rel_err) << " cases_run=" << c.cases_run;
      result.error_log = log.str();
      break;
    }
    case Stage::hack_detected:
      result.error_log = "generated kernel code was not executed: " +
                         (response.hack ? response.hack->evidence : std::string("no trace"));
      break;
    case Stage::unstable_timing:
      result.error_log = timing_note;
      break;
    case Stage::passed:
      break;
  }

  if (result.correct) {
    result.candidate_timing = cand_stats;
    if (measure_baseline) result.baseline_timing = baseline;
    const double base_ns = measure_baseline ? baseline->trimmed_mean : task.baseline_mode.fixed_ns;
    result.speedup = base_ns / cand_stats->trimmed_mean;
  }

  result.score = score_eval(result, weights);
  return result;
}

double score_eval(const EvalResult& eval, const ScoreWeights& weights) {
  if (eval.stage == Stage::unstable_timing) return weights.compile_credit + weights.correct_credit;
  return compute_score({eval.compiled, eval.correct, eval.hack_detected}, eval.speedup, weights);
}

std::string_view to_string(EvalJob::State state) {
  switch (state) {
    case EvalJob::State::queued: return "queued";
    case EvalJob::State::running: return "running";
    case EvalJob::State::done: return "done";
    case EvalJob::State::failed: return "failed";
  }
  return "unknown";
}

void to_json(nlohmann::json& j, const EvalJob& v) {
  j = {{"job_id", v.job_id},
       {"task", v.task},
       {"candidate", v.candidate},
       {"submitted_at", format_rfc3339(v.submitted_at)},
       {"state", std::string(to_string(v.state))},
       {"result", v.result ? nlohmann::json(*v.result) : nlohmann::json(nullptr)},
       {"error", v.error}};
}

void from_json(const nlohmann::json& j, EvalJob& v) {
  v = EvalJob{};
  j.at("job_id").get_to(v.job_id);
  j.at("task").get_to(v.task);
  j.at("candidate").get_to(v.candidate);
  v.submitted_at = parse_rfc3339(j.at("submitted_at").get<std::string>());
  const auto state = j.at("state").get<std::string>();
  if (state == "queued") v.state = EvalJob::State::queued;
  else if (state == "running") v.state = EvalJob::State::running;
  else if (state == "done") v.state = EvalJob::State::done;
  else if (state == "failed") v.state = EvalJob::State::failed;
  else throw Error(ErrorCode::parse_error, "unknown job state '" + state + "'");
  if (const auto& r = j.at("result"); !r.is_null()) v.result = r.get<EvalResult>();
  v.error = j.value("error", std::string{});
}

EvalService::EvalService(EvalServiceConfig config) : config_(config) {
  if (config_.parallelism == 0) throw Error(ErrorCode::invalid_argument, "parallelism must be >= 1");
  config_.weights.validate();
  register_backend(BackendDescriptor{"simulated", BackendDescriptor::Kind::simulated, "",
                                     SimulatedBackend::hardware()});
  workers_.reserve(config_.parallelism);
  for (std::size_t i = 0; i < config_.parallelism; ++i)
    workers_.emplace_back([this] { worker_loop(); });
}

EvalService::~EvalService() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

void EvalService::register_backend(const BackendDescriptor& descriptor,
                                   std::shared_ptr<Backend> backend) {
  if (descriptor.backend_id.empty())
    throw Error(ErrorCode::invalid_argument, "backend_id must be non-empty");
  if (!backend) backend = make_backend(descriptor);
  std::unique_lock lock(registry_mutex_);
  registry_[descriptor.backend_id] = {descriptor, std::move(backend)};
}

std::vector<BackendDescriptor> EvalService::backends() const {
  std::shared_lock lock(registry_mutex_);
  std::vector<BackendDescriptor> out;
  for (const auto& [id, entry] : registry_) out.push_back(entry.first);
  return out;
}

std::pair<BackendDescriptor, std::shared_ptr<Backend>> EvalService::lookup(
    const std::string& id) const {
  std::shared_lock lock(registry_mutex_);
  auto it = registry_.find(id);
  if (it == registry_.end())
    throw Error(ErrorCode::unknown_backend, "backend '" + id + "' is not registered");
  return it->second;
}

EvalResult EvalService::evaluate(const TaskSpec& task, const CandidateProgram& candidate) {
  auto [descriptor, backend] = lookup(task.backend_id);
  return orchestrate_evaluation(task, candidate, *backend, descriptor, config_.weights, &baselines_);
}

std::string EvalService::submit_job(TaskSpec task, CandidateProgram candidate) {
  lookup(task.backend_id);
  task.validate();

  EvalJob job;
  job.task = std::move(task);
  job.candidate = std::move(candidate);
  job.submitted_at = std::chrono::time_point_cast<std::chrono::nanoseconds>(Clock::now());
  {
    std::lock_guard qlock(queue_mutex_);
    if (queue_.size() >= config_.queue_capacity)
      throw Error(ErrorCode::queue_full, "evaluation queue is full");
    std::unique_lock jlock(jobs_mutex_);
    char id[32];
    std::snprintf(id, sizeof id, "job-%06llu", static_cast<unsigned long long>(next_job_++));
    job.job_id = id;
    jobs_.emplace(job.job_id, job);
    queue_.push_back(job.job_id);
  }
  queue_cv_.notify_one();
  return job.job_id;
}

EvalJob EvalService::poll_job(const std::string& job_id) const {
  std::shared_lock lock(jobs_mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(ErrorCode::unknown_job, "no job '" + job_id + "'");
  return it->second;
}

bool EvalService::purge_job(const std::string& job_id) {
  std::unique_lock lock(jobs_mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end() || it->second.state == EvalJob::State::queued ||
      it->second.state == EvalJob::State::running)
    return false;
  jobs_.erase(it);
  return true;
}

void EvalService::worker_loop() {
  for (;;) {
    std::string job_id;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_ && queue_.empty()) return;
      job_id = std::move(queue_.front());
      queue_.pop_front();
    }
    TaskSpec task;
    CandidateProgram candidate;
    {
      std::unique_lock lock(jobs_mutex_);
      auto& job = jobs_.at(job_id);
      job.state = EvalJob::State::running;
      task = job.task;
      candidate = job.candidate;
    }
    std::optional<EvalResult> result;
    std::string error;
    try {
      result = evaluate(task, candidate);
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::unique_lock lock(jobs_mutex_);
    auto& job = jobs_.at(job_id);
    if (result) {
      job.result = std::move(result);
      job.state = EvalJob::State::done;
    } else {
      job.error = std::move(error);
      job.state = EvalJob::State::failed;
    }
  }
}

}  // namespace kevolve
