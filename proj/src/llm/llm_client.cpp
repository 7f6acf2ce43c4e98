// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/llm/llm_client.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "kevolve/core/digest.hpp"
#include "kevolve/core/serialization.hpp"
#include "kevolve/prompt/prompt_engine.hpp"

namespace kevolve {

void DecodingConfig::validate() const {
  if (temperature < 0.0 || temperature > 2.0)
    throw Error(ErrorCode::invalid_argument, "temperature must be in [0, 2]");
  if (!(top_p > 0.0) || top_p > 1.0) throw Error(ErrorCode::invalid_argument, "top_p must be in (0, 1]");
  if (max_output_tokens < 1) throw Error(ErrorCode::invalid_argument, "max_output_tokens must be >= 1");
}

void to_json(nlohmann::json& j, const DecodingConfig& v) {
  j = {{"temperature", v.temperature}, {"top_p", v.top_p},
       {"max_output_tokens", v.max_output_tokens}, {"model_id", v.model_id}};
}
void from_json(const nlohmann::json& j, DecodingConfig& v) {
  v.temperature = j.value("temperature", v.temperature);
  v.top_p = j.value("top_p", v.top_p);
  v.max_output_tokens = j.value("max_output_tokens", v.max_output_tokens);
  v.model_id = j.value("model_id", v.model_id);
}
void to_json(nlohmann::json& j, const TokenUsage& v) {
  j = {{"input_tokens", v.input_tokens}, {"output_tokens", v.output_tokens}};
}
void from_json(const nlohmann::json& j, TokenUsage& v) {
  v.input_tokens = j.value("input_tokens", std::size_t{0});
  v.output_tokens = j.value("output_tokens", std::size_t{0});
}
void to_json(nlohmann::json& j, const CompletionRecord& v) {
  j = {{"prompt_hash", v.prompt_hash}, {"model_id", v.model_id},
       {"output_text", v.output_text}, {"usage", v.usage},
       {"latency_s", v.latency_s},     {"attempt", v.attempt},
       {"output_truncated", v.output_truncated}, {"error", v.error}};
}
void from_json(const nlohmann::json& j, CompletionRecord& v) {
  v.prompt_hash = j.value("prompt_hash", std::string{});
  v.model_id = j.value("model_id", std::string{});
  v.output_text = j.value("output_text", std::string{});
  if (auto it = j.find("usage"); it != j.end()) it->get_to(v.usage);
  v.latency_s = j.value("latency_s", 0.0);
  v.attempt = j.value("attempt", 1u);
  v.output_truncated = j.value("output_truncated", false);
  v.error = j.value("error", std::string{});
}

std::string prompt_hash(const std::string& system, const std::string& user) {
  std::string joined = system;
  joined.push_back('\0');
  joined += user;
  return sha256_hex(joined);
}

AuditLog::AuditLog(std::string path) : path_(std::move(path)) {}

void AuditLog::append(const CompletionRecord& record) {
  std::lock_guard lock(mutex_);
  records_.push_back(record);
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error(ErrorCode::io_error, "cannot append audit log " + path_);
  out << nlohmann::json(record).dump() << "\n";
}

std::vector<CompletionRecord> AuditLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

LlmClient::LlmClient(std::shared_ptr<Provider> provider, RetryPolicy retry,
                     std::shared_ptr<AuditLog> audit, Sleeper sleeper)
    : provider_(std::move(provider)),
      retry_(retry),
      audit_(audit ? std::move(audit) : std::make_shared<AuditLog>()),
      sleeper_(std::move(sleeper)) {
  if (!provider_) throw Error(ErrorCode::invalid_argument, "LlmClient needs a provider");
  if (retry_.max_attempts < 1) retry_.max_attempts = 1;
  if (!sleeper_)
    sleeper_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

CompletionRecord LlmClient::complete(const std::string& system, const std::string& user,
                                     const DecodingConfig& config) {
  config.validate();
  CompletionRecord record;
  record.prompt_hash = prompt_hash(system, user);
  record.model_id = config.model_id;
  const auto started = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };

  for (std::uint32_t attempt = 1;; ++attempt) {
    record.attempt = attempt;
    try {
      ProviderReply reply = provider_->complete(system, user, config);
      record.output_truncated = reply.hit_length_limit;
      const std::size_t char_cap = config.max_output_tokens * 4;
      if (reply.text.size() > char_cap) {
        reply.text.resize(char_cap);
        record.output_truncated = true;
      }
      record.usage = reply.usage.value_or(
          TokenUsage{estimate_tokens(system) + estimate_tokens(user), estimate_tokens(reply.text)});
      record.output_text = std::move(reply.text);
      record.latency_s = elapsed();
      audit_->append(record);
      return record;
    } catch (const TransientProviderError& e) {
      if (attempt >= retry_.max_attempts) {
        record.error = e.what();
        record.latency_s = elapsed();
        audit_->append(record);
        throw Error(ErrorCode::provider_error, std::string("retries exhausted: ") + e.what());
      }
      sleeper_(retry_.base_delay_s * std::pow(2.0, attempt - 1));
    } catch (const Error& e) {
      record.error = e.what();
      record.latency_s = elapsed();
      audit_->append(record);
      throw;
    }
  }
}

ScriptedMock::ScriptedMock(std::vector<Entry> script)
    : script_(std::move(script)), consumed_(script_.size(), false) {
  if (script_.empty()) throw Error(ErrorCode::invalid_argument, "mock script must be non-empty");
}

std::shared_ptr<ScriptedMock> ScriptedMock::from_json(const nlohmann::json& script) {
  if (!script.is_array()) throw Error(ErrorCode::parse_error, "mock script must be an array");
  std::vector<Entry> entries;
  for (const auto& item : script) {
    Entry e;
    const auto& m = item.contains("match") ? item.at("match") : nlohmann::json("any");
    if (m.is_string() && m.get<std::string>() == "any") {
      e.match = Entry::Match::any;
    } else if (m.is_object() && m.contains("contains")) {
      e.match = Entry::Match::contains;
      e.text = m.at("contains").get<std::string>();
    } else if (m.is_object() && m.contains("iteration")) {
      e.match = Entry::Match::iteration;
      e.iteration = m.at("iteration").get<std::size_t>();
    } else {
      throw Error(ErrorCode::parse_error, "bad mock matcher " + m.dump());
    }
    if (item.contains("response")) e.response = item.at("response").get<std::string>();
    e.error = item.value("error", std::string{});
    if (!e.response && e.error.empty())
      throw Error(ErrorCode::parse_error, "mock entry needs a response or an error");
    e.hit_length_limit = item.value("length_limit", false);
    entries.push_back(std::move(e));
  }
  return std::make_shared<ScriptedMock>(std::move(entries));
}

std::shared_ptr<ScriptedMock> ScriptedMock::from_file(const std::string& path) {
  return from_json(read_json_file(path));
}

ProviderReply ScriptedMock::complete(const std::string& /*system*/, const std::string& user,
                                     const DecodingConfig& /*config*/) {
  std::lock_guard lock(mutex_);
  const std::size_t call = ++calls_;
  for (std::size_t i = 0; i < script_.size(); ++i) {
    if (consumed_[i]) continue;
    const Entry& e = script_[i];
    const bool hit = e.match == Entry::Match::any ||
                     (e.match == Entry::Match::contains && user.find(e.text) != std::string::npos) ||
                     (e.match == Entry::Match::iteration && e.iteration == call);
    if (!hit) continue;
    consumed_[i] = true;
    if (e.response) return ProviderReply{*e.response, std::nullopt, e.hit_length_limit};
    if (e.error == "transient") throw TransientProviderError("scripted transient failure");
    if (e.error == "credential") throw Error(ErrorCode::credential_missing, "scripted credential failure");
    throw Error(ErrorCode::provider_error, "scripted failure: " + e.error);
  }
  throw Error(ErrorCode::script_exhausted, "no script entry matches call " + std::to_string(call));
}

std::size_t ScriptedMock::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::size_t ScriptedMock::remaining() const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count(consumed_.begin(), consumed_.end(), false));
}

}  // namespace kevolve
