// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "kevolve/core/types.hpp"
#include "kevolve/eval/backend.hpp"
#include "kevolve/eval/timing.hpp"

namespace kevolve {

// Anything that turns (task, candidate) into a verdict: the in-process
// service or a remote HTTP client.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvalResult evaluate(const TaskSpec& task, const CandidateProgram& candidate) = 0;
};

// Baseline statistics per (task_id, backend_id), measured once.
class BaselineCache {
 public:
  std::optional<TimingStats> get(const std::string& task_id, const std::string& backend_id) const;
  void put(const std::string& task_id, const std::string& backend_id, TimingStats stats);
  void invalidate(const std::string& task_id);

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, TimingStats> stats_;
};

// Runs the phases in order (compile, correctness, hack detection, baseline
// timing, candidate timing, stability gate), re-measuring unstable timing up
// to timing.max_retry_rounds, then derives speedup and score. The first
// failing phase fixes the stage.
// Unstable timing earns compile and correctness credit but no speedup credit.
double score_eval(const EvalResult& eval, const ScoreWeights& weights);

EvalResult orchestrate_evaluation(const TaskSpec& task, const CandidateProgram& candidate,
                                  Backend& backend, const BackendDescriptor& descriptor,
                                  const ScoreWeights& weights, BaselineCache* cache = nullptr);

struct EvalJob {
  enum class State { queued, running, done, failed };

  std::string job_id;
  TaskSpec task;
  CandidateProgram candidate;
  Timestamp submitted_at{};
  State state = State::queued;
  std::optional<EvalResult> result;
  std::string error;  // infrastructure failure message when failed
};

std::string_view to_string(EvalJob::State state);
void to_json(nlohmann::json& j, const EvalJob& v);
void from_json(const nlohmann::json& j, EvalJob& v);

struct EvalServiceConfig {
  std::size_t parallelism = 2;
  std::size_t queue_capacity = 1024;
  ScoreWeights weights;
};

// Backend registry, synchronous evaluation, and a bounded job queue served
// by a fixed worker pool. Jobs are retained until purged.
class EvalService final : public Evaluator {
 public:
  explicit EvalService(EvalServiceConfig config = {});
  ~EvalService() override;

  EvalService(const EvalService&) = delete;
  EvalService& operator=(const EvalService&) = delete;

  // The "simulated" backend is registered on construction.
  void register_backend(const BackendDescriptor& descriptor,
                        std::shared_ptr<Backend> backend = nullptr);
  std::vector<BackendDescriptor> backends() const;

  EvalResult evaluate(const TaskSpec& task, const CandidateProgram& candidate) override;

  std::string submit_job(TaskSpec task, CandidateProgram candidate);
  EvalJob poll_job(const std::string& job_id) const;
  bool purge_job(const std::string& job_id);

  void invalidate_baseline(const std::string& task_id) { baselines_.invalidate(task_id); }
  const EvalServiceConfig& config() const { return config_; }

 private:
  void worker_loop();
  std::pair<BackendDescriptor, std::shared_ptr<Backend>> lookup(const std::string& id) const;

  EvalServiceConfig config_;
  BaselineCache baselines_;

  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::pair<BackendDescriptor, std::shared_ptr<Backend>>> registry_;

  mutable std::shared_mutex jobs_mutex_;
  std::map<std::string, EvalJob> jobs_;
  std::uint64_t next_job_ = 1;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::string> queue_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace kevolve
