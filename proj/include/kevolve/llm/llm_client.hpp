// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kevolve/core/error.hpp"

namespace kevolve {

struct DecodingConfig {
  double temperature = 0.6;
  double top_p = 0.95;
  std::size_t max_output_tokens = 32768;
  std::string model_id = "mock";

  void validate() const;
  bool operator==(const DecodingConfig&) const = default;
};

struct TokenUsage {
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  bool operator==(const TokenUsage&) const = default;
};

struct CompletionRecord {
  std::string prompt_hash;
  std::string model_id;
  std::string output_text;
  TokenUsage usage;
  double latency_s = 0.0;
  std::uint32_t attempt = 1;
  bool output_truncated = false;
  std::string error;  // set on the final record of a failed call
};

void to_json(nlohmann::json& j, const DecodingConfig& v);
void from_json(const nlohmann::json& j, DecodingConfig& v);
void to_json(nlohmann::json& j, const TokenUsage& v);
void from_json(const nlohmann::json& j, TokenUsage& v);
void to_json(nlohmann::json& j, const CompletionRecord& v);
void from_json(const nlohmann::json& j, CompletionRecord& v);

// sha256 over system, one NUL byte, then user.
std::string prompt_hash(const std::string& system, const std::string& user);

// Thrown by providers for failures worth retrying (transport errors, 429,
// 5xx).
class TransientProviderError : public Error {
 public:
  explicit TransientProviderError(const std::string& message)
      : Error(ErrorCode::provider_error, message) {}
};

struct ProviderReply {
  std::string text;
  std::optional<TokenUsage> usage;
  bool hit_length_limit = false;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderReply complete(const std::string& system, const std::string& user,
                                 const DecodingConfig& config) = 0;
};

// Append-only record of every completion call; optionally mirrored to a
// JSON-lines file.
class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(std::string path);

  void append(const CompletionRecord& record);
  std::vector<CompletionRecord> records() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::string path_;
  std::vector<CompletionRecord> records_;
};

struct RetryPolicy {
  std::uint32_t max_attempts = 3;
  double base_delay_s = 1.0;  // doubles after every failed attempt
};

class LlmClient {
 public:
  using Sleeper = std::function<void(double seconds)>;

  LlmClient(std::shared_ptr<Provider> provider, RetryPolicy retry = {},
            std::shared_ptr<AuditLog> audit = std::make_shared<AuditLog>(), Sleeper sleeper = {});

  // Retries transient failures with exponential backoff; credential errors
  // and other provider errors fail immediately. The output is cut to
  // max_output_tokens (4 chars per token) with output_truncated set, which
  // is also set when the provider reports a length stop.
  CompletionRecord complete(const std::string& system, const std::string& user,
                            const DecodingConfig& config);

  AuditLog& audit() { return *audit_; }

 private:
  std::shared_ptr<Provider> provider_;
  RetryPolicy retry_;
  std::shared_ptr<AuditLog> audit_;
  Sleeper sleeper_;
};

// Deterministic replay provider. Each call consumes the first unconsumed
// entry whose matcher accepts it; iteration(n) matches the n-th call.
class ScriptedMock final : public Provider {
 public:
  struct Entry {
    enum class Match { any, contains, iteration };
    Match match = Match::any;
    std::string text;          // for contains, tested against the user prompt
    std::size_t iteration = 0;  // 1-based call number
    std::optional<std::string> response;
    // "transient", "credential" or "fatal"; used when response is absent.
    std::string error;
    bool hit_length_limit = false;
  };

  explicit ScriptedMock(std::vector<Entry> script);

  // [{"match": "any" | {"contains": "..."} | {"iteration": n},
  //   "response": "..." | "error": "transient", "length_limit": bool}]
  static std::shared_ptr<ScriptedMock> from_json(const nlohmann::json& script);
  static std::shared_ptr<ScriptedMock> from_file(const std::string& path);

  ProviderReply complete(const std::string& system, const std::string& user,
                         const DecodingConfig& config) override;

  std::size_t calls() const;
  std::size_t remaining() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Entry> script_;
  std::vector<bool> consumed_;
  std::size_t calls_ = 0;
};

struct ChatProviderConfig {
  std::string endpoint_url;  // scheme://host[:port][/path]
  std::string model_id;
  std::string credential_env = "OPENAI_API_KEY";  // empty: no auth header
  double connect_timeout_s = 10.0;
  double read_timeout_s = 600.0;
};

void from_json(const nlohmann::json& j, ChatProviderConfig& v);

// Chat-completions-compatible HTTP endpoint. A path-less endpoint URL posts
// to /v1/chat/completions.
class ChatCompletionsProvider final : public Provider {
 public:
  explicit ChatCompletionsProvider(ChatProviderConfig config);

  ProviderReply complete(const std::string& system, const std::string& user,
                         const DecodingConfig& config) override;

 private:
  ChatProviderConfig config_;
  std::string base_;
  std::string path_;
};

}  // namespace kevolve
