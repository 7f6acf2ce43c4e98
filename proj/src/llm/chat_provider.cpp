// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include <httplib.h>

#include <cstdlib>

#include "kevolve/llm/llm_client.hpp"

namespace kevolve {

void from_json(const nlohmann::json& j, ChatProviderConfig& v) {
  v.endpoint_url = j.at("endpoint_url").get<std::string>();
  v.model_id = j.value("model_id", v.model_id);
  v.credential_env = j.value("credential_env", v.credential_env);
  if (auto it = j.find("timeouts"); it != j.end()) {
    v.connect_timeout_s = it->value("connect_s", v.connect_timeout_s);
    v.read_timeout_s = it->value("read_s", v.read_timeout_s);
  }
}

ChatCompletionsProvider::ChatCompletionsProvider(ChatProviderConfig config)
    : config_(std::move(config)) {
  const auto scheme = config_.endpoint_url.find("://");
  if (scheme == std::string::npos)
    throw Error(ErrorCode::invalid_argument, "endpoint_url needs a scheme: " + config_.endpoint_url);
  const auto slash = config_.endpoint_url.find('/', scheme + 3);
  base_ = config_.endpoint_url.substr(0, slash);
  path_ = slash == std::string::npos ? "/v1/chat/completions" : config_.endpoint_url.substr(slash);
}

ProviderReply ChatCompletionsProvider::complete(const std::string& system, const std::string& user,
                                                const DecodingConfig& config) {
  httplib::Headers headers;
  if (!config_.credential_env.empty()) {
    const char* key = std::getenv(config_.credential_env.c_str());
    if (!key || !*key)
      throw Error(ErrorCode::credential_missing, "environment variable " + config_.credential_env +
                                                     " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const nlohmann::json body = {
      {"model", config_.model_id.empty() ? config.model_id : config_.model_id},
      {"messages", {{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}}},
      {"temperature", config.temperature},
      {"top_p", config.top_p},
      {"max_tokens", config.max_output_tokens},
  };

  httplib::Client client(base_);
  const auto split = [](double s) {
    const auto whole = static_cast<time_t>(s);
    return std::pair{whole, static_cast<time_t>((s - static_cast<double>(whole)) * 1e6)};
  };
  const auto [cs, cus] = split(config_.connect_timeout_s);
  const auto [rs, rus] = split(config_.read_timeout_s);
  client.set_connection_timeout(cs, cus);
  client.set_read_timeout(rs, rus);
  client.set_write_timeout(rs, rus);

  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransientProviderError("transport: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403)
    throw Error(ErrorCode::credential_missing,
                "endpoint rejected credential (HTTP " + std::to_string(res->status) + ")");
  if (res->status == 429 || res->status >= 500)
    throw TransientProviderError("HTTP " + std::to_string(res->status) + ": " + res->body);
  if (res->status >= 400)
    throw Error(ErrorCode::provider_error, "HTTP " + std::to_string(res->status) + ": " + res->body);

  ProviderReply reply;
  try {
    const auto parsed = nlohmann::json::parse(res->body);
    const auto& choice = parsed.at("choices").at(0);
    reply.text = choice.at("message").at("content").get<std::string>();
    reply.hit_length_limit = choice.value("finish_reason", std::string{}) == "length";
    if (auto u = parsed.find("usage"); u != parsed.end() && u->is_object())
      reply.usage = TokenUsage{u->value("prompt_tokens", std::size_t{0}),
                               u->value("completion_tokens", std::size_t{0})};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::provider_error, std::string("malformed completion: ") + e.what());
  }
  return reply;
}

}  // namespace kevolve
