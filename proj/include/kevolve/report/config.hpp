// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "kevolve/eval/eval_service.hpp"
#include "kevolve/evolve/controller.hpp"
#include "kevolve/llm/llm_client.hpp"

namespace kevolve {

struct LlmSettings {
  std::string provider = "mock";  // "mock" or "chat"
  std::string mock_script;
  ChatProviderConfig chat;
  RetryPolicy retry;
};

struct ServerSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct AppConfig {
  RunConfig run;
  EvalServiceConfig eval;
  LlmSettings llm;
  ServerSettings server;
  std::string backends_file;   // registry of external backends
  std::string backend_id;      // overrides the task's backend when set
  std::string vocabulary_file;
  std::string system_template;
  std::string user_template;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

EnvLookup process_env();

// Applies KEVOLVE_<SECTION>_<KEY> overrides onto a config tree (values are
// parsed as JSON when possible, strings otherwise), then the shortcuts
// KEVOLVE_PORT, KEVOLVE_PARALLELISM and KEVOLVE_BACKENDS.
nlohmann::json apply_env_overrides(nlohmann::json tree, const EnvLookup& env);

AppConfig config_from_json(const nlohmann::json& tree);
nlohmann::json config_to_json(const AppConfig& config);

// Missing path: defaults plus environment.
AppConfig load_config(const std::optional<std::string>& path, const EnvLookup& env = process_env());

}  // namespace kevolve
