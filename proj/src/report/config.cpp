// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/report/config.hpp"

#include <cctype>
#include <cstdlib>

#include "kevolve/core/error.hpp"
#include "kevolve/core/serialization.hpp"

namespace kevolve {

using nlohmann::json;

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

namespace {

std::string env_name(const std::vector<std::string>& path) {
  std::string name = "KEVOLVE";
  for (const auto& part : path) {
    name += '_';
    for (char c : part) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return name;
}

json parse_env_value(const std::string& text, const json& current) {
  if (current.is_string()) return text;
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

void override_leaves(json& node, std::vector<std::string>& path, const EnvLookup& env) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    path.push_back(it.key());
    if (it->is_object()) {
      override_leaves(*it, path, env);
    } else if (auto v = env(env_name(path))) {
      *it = parse_env_value(*v, *it);
    }
    path.pop_back();
  }
}

void merge_into(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
      merge_into(base[it.key()], *it);
    else
      base[it.key()] = *it;
  }
}

json chat_to_json(const ChatProviderConfig& c) {
  return {{"endpoint_url", c.endpoint_url},
          {"model_id", c.model_id},
          {"credential_env", c.credential_env},
          {"connect_timeout_s", c.connect_timeout_s},
          {"read_timeout_s", c.read_timeout_s}};
}

}  // namespace

json config_to_json(const AppConfig& c) {
  json run = c.run;
  return {{"run", run},
          {"eval",
           {{"parallelism", c.eval.parallelism},
            {"queue_capacity", c.eval.queue_capacity},
            {"weights", c.eval.weights}}},
          {"llm",
           {{"provider", c.llm.provider},
            {"mock_script", c.llm.mock_script},
            {"chat", chat_to_json(c.llm.chat)},
            {"retry", {{"max_attempts", c.llm.retry.max_attempts}, {"base_delay_s", c.llm.retry.base_delay_s}}}}},
          {"server", {{"host", c.server.host}, {"port", c.server.port}}},
          {"backends_file", c.backends_file},
          {"backend_id", c.backend_id},
          {"vocabulary_file", c.vocabulary_file},
          {"system_template", c.system_template},
          {"user_template", c.user_template}};
}

AppConfig config_from_json(const json& tree) {
  // Start from the full default tree so partial files keep defaults.
  json full = config_to_json(AppConfig{});
  merge_into(full, tree);
  AppConfig c;
  c.run = full.at("run").get<RunConfig>();
  const auto& e = full.at("eval");
  c.eval.parallelism = e.at("parallelism").get<std::size_t>();
  c.eval.queue_capacity = e.at("queue_capacity").get<std::size_t>();
  c.eval.weights = e.at("weights").get<ScoreWeights>();
  const auto& l = full.at("llm");
  c.llm.provider = l.at("provider").get<std::string>();
  c.llm.mock_script = l.at("mock_script").get<std::string>();
  c.llm.chat = l.at("chat").get<ChatProviderConfig>();
  c.llm.retry.max_attempts = l.at("retry").at("max_attempts").get<std::uint32_t>();
  c.llm.retry.base_delay_s = l.at("retry").at("base_delay_s").get<double>();
  c.server.host = full.at("server").at("host").get<std::string>();
  c.server.port = full.at("server").at("port").get<int>();
  c.backends_file = full.at("backends_file").get<std::string>();
  c.backend_id = full.at("backend_id").get<std::string>();
  c.vocabulary_file = full.at("vocabulary_file").get<std::string>();
  c.system_template = full.at("system_template").get<std::string>();
  c.user_template = full.at("user_template").get<std::string>();
  if (c.llm.provider != "mock" && c.llm.provider != "chat")
    throw Error(ErrorCode::invalid_argument, "llm.provider must be \"mock\" or \"chat\"");
  if (c.eval.parallelism == 0) throw Error(ErrorCode::invalid_argument, "eval.parallelism must be >= 1");
  c.run.validate();
  c.eval.weights.validate();
  return c;
}

json apply_env_overrides(json tree, const EnvLookup& env) {
  json full = config_to_json(AppConfig{});
  merge_into(full, tree);
  std::vector<std::string> path;
  override_leaves(full, path, env);
  if (auto v = env("KEVOLVE_PORT")) full["server"]["port"] = parse_env_value(*v, full["server"]["port"]);
  if (auto v = env("KEVOLVE_PARALLELISM"))
    full["eval"]["parallelism"] = parse_env_value(*v, full["eval"]["parallelism"]);
  if (auto v = env("KEVOLVE_BACKENDS")) full["backends_file"] = *v;
  return full;
}

AppConfig load_config(const std::optional<std::string>& path, const EnvLookup& env) {
  json tree = json::object();
  if (path) tree = read_json_file(*path);
  return config_from_json(apply_env_overrides(std::move(tree), env));
}

}  // namespace kevolve
