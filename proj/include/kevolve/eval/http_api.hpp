// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// JSON-over-HTTP surface of the evaluation service:
//   POST /v1/evaluate      {task, candidate} -> EvalResult
//   POST /v1/jobs          {task, candidate} -> {job_id}
//   GET  /v1/jobs/{id}     -> EvalJob
//   DELETE /v1/jobs/{id}   -> {purged}
//   GET  /v1/health        -> {status, backends[]}
//   GET  /v1/backends      -> [BackendDescriptor]
// Errors come back as {"error": code, "message": text} with 400 (bad
// input), 404 (unknown job/backend), 429 (queue full) or 502 (backend
// unavailable).

#include <memory>
#include <string>
#include <thread>

#include "kevolve/eval/eval_service.hpp"

namespace httplib {
class Server;
}

namespace kevolve {

class EvalHttpServer {
 public:
  explicit EvalHttpServer(EvalService& service);
  ~EvalHttpServer();

  EvalHttpServer(const EvalHttpServer&) = delete;
  EvalHttpServer& operator=(const EvalHttpServer&) = delete;

  // Binds and serves on a background thread. port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  EvalService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

// Evaluator that forwards to a remote service's /v1/evaluate.
class HttpEvalClient final : public Evaluator {
 public:
  explicit HttpEvalClient(std::string base_url, double timeout_s = 900.0);

  EvalResult evaluate(const TaskSpec& task, const CandidateProgram& candidate) override;
  std::string submit_job(const TaskSpec& task, const CandidateProgram& candidate);
  EvalJob poll_job(const std::string& job_id);

 private:
  nlohmann::json request(const std::string& method, const std::string& path,
                         const nlohmann::json* body);

  std::string base_url_;
  double timeout_s_;
};

}  // namespace kevolve
