// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/eval/http_api.hpp"

#include <httplib.h>

#include "kevolve/core/error.hpp"
#include "kevolve/core/serialization.hpp"

namespace kevolve {

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::unknown_job:
    case ErrorCode::unknown_backend: return 404;
    case ErrorCode::queue_full: return 429;
    case ErrorCode::backend_unavailable: return 502;
    default: return 400;
  }
}

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      reply(res, status_for(e.code()),
            {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
    } catch (const nlohmann::json::exception& e) {
      reply(res, 400, {{"error", "parse-error"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
  };
}

std::pair<TaskSpec, CandidateProgram> parse_job_body(const httplib::Request& req) {
  const auto body = nlohmann::json::parse(req.body);
  return {body.at("task").get<TaskSpec>(), body.at("candidate").get<CandidateProgram>()};
}

}  // namespace

EvalHttpServer::EvalHttpServer(EvalService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.Post("/v1/evaluate", guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto [task, candidate] = parse_job_body(req);
           reply(res, 200, service_.evaluate(task, candidate));
         }));
  s.Post("/v1/jobs", guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto [task, candidate] = parse_job_body(req);
           reply(res, 202, {{"job_id", service_.submit_job(std::move(task), std::move(candidate))}});
         }));
  s.Get(R"(/v1/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          reply(res, 200, service_.poll_job(req.matches[1]));
        }));
  s.Delete(R"(/v1/jobs/([^/]+))",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             reply(res, 200, {{"purged", service_.purge_job(req.matches[1])}});
           }));
  s.Get("/v1/health", guarded([this](const httplib::Request&, httplib::Response& res) {
          nlohmann::json ids = nlohmann::json::array();
          for (const auto& d : service_.backends()) ids.push_back(d.backend_id);
          reply(res, 200, {{"status", "ok"}, {"backends", ids}});
        }));
  s.Get("/v1/backends", guarded([this](const httplib::Request&, httplib::Response& res) {
          reply(res, 200, service_.backends());
        }));
}

EvalHttpServer::~EvalHttpServer() { stop(); }

int EvalHttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0)
    bound = server_->bind_to_any_port(host);
  else if (!server_->bind_to_port(host, port))
    bound = -1;
  if (bound < 0) throw Error(ErrorCode::io_error, "cannot bind " + host);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void EvalHttpServer::listen(const std::string& host, int port) {
  if (!server_->listen(host, port))
    throw Error(ErrorCode::io_error, "cannot listen on " + host + ":" + std::to_string(port));
}

void EvalHttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

HttpEvalClient::HttpEvalClient(std::string base_url, double timeout_s)
    : base_url_(std::move(base_url)), timeout_s_(timeout_s) {}

nlohmann::json HttpEvalClient::request(const std::string& method, const std::string& path,
                                       const nlohmann::json* body) {
  httplib::Client client(base_url_);
  const auto secs = static_cast<time_t>(timeout_s_);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  httplib::Result res = method == "POST"
                            ? client.Post(path, body->dump(), "application/json")
                            : client.Get(path);
  if (!res)
    throw Error(ErrorCode::backend_unavailable,
                "eval service " + base_url_ + ": " + httplib::to_string(res.error()));
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::backend_unavailable, std::string("eval service reply: ") + e.what());
  }
  if (res->status >= 400) {
    const auto code = parsed.value("error", std::string{});
    const auto message = parsed.value("message", res->body);
    if (res->status == 404 && code == "unknown-job") throw Error(ErrorCode::unknown_job, message);
    if (res->status == 429) throw Error(ErrorCode::queue_full, message);
    if (res->status == 400) throw Error(ErrorCode::invalid_argument, message);
    throw Error(ErrorCode::backend_unavailable, message);
  }
  return parsed;
}

EvalResult HttpEvalClient::evaluate(const TaskSpec& task, const CandidateProgram& candidate) {
  const nlohmann::json body = {{"task", task}, {"candidate", candidate}};
  return request("POST", "/v1/evaluate", &body).get<EvalResult>();
}

std::string HttpEvalClient::submit_job(const TaskSpec& task, const CandidateProgram& candidate) {
  const nlohmann::json body = {{"task", task}, {"candidate", candidate}};
  return request("POST", "/v1/jobs", &body).at("job_id").get<std::string>();
}

EvalJob HttpEvalClient::poll_job(const std::string& job_id) {
  return request("GET", "/v1/jobs/" + job_id, nullptr).get<EvalJob>();
}

}  // namespace kevolve
