// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/eval/sandbox_protocol.hpp"

#include <array>
#include <utility>

#include "kevolve/core/error.hpp"
#include "kevolve/core/serialization.hpp"

namespace kevolve {

namespace {

constexpr std::array<std::pair<Phase, std::string_view>, 5> kPhaseNames{{
    {Phase::compile, "compile"},
    {Phase::correctness, "correctness"},
    {Phase::hack, "hack"},
    {Phase::baseline_timing, "baseline_timing"},
    {Phase::candidate_timing, "candidate_timing"},
}};

constexpr std::array<std::pair<ExecutionMode, std::string_view>, 3> kModeNames{{
    {ExecutionMode::inline_script, "inline_script"},
    {ExecutionMode::tensor_module, "tensor_module"},
    {ExecutionMode::gpu_kernel, "gpu_kernel"},
}};

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
void get_opt(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null())
    out = it->get<T>();
  else
    out.reset();
}

template <typename T>
void get_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) it->get_to(out);
}

}  // namespace

std::string_view to_string(Phase phase) {
  for (const auto& [p, name] : kPhaseNames)
    if (p == phase) return name;
  return "unknown";
}

Phase phase_from_string(std::string_view name) {
  for (const auto& [p, n] : kPhaseNames)
    if (n == name) return p;
  throw Error(ErrorCode::parse_error, "unknown phase '" + std::string(name) + "'");
}

std::string_view to_string(ExecutionMode mode) {
  for (const auto& [m, name] : kModeNames)
    if (m == mode) return name;
  return "unknown";
}

ExecutionMode execution_mode_from_string(std::string_view name) {
  for (const auto& [m, n] : kModeNames)
    if (n == name) return m;
  throw Error(ErrorCode::parse_error, "unknown execution mode '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const CompileOutcome& v) { j = {{"ok", v.ok}, {"log", v.log}}; }
void from_json(const nlohmann::json& j, CompileOutcome& v) {
  get_opt(j, "ok", v.ok);
  get_opt(j, "log", v.log);
}
void to_json(nlohmann::json& j, const CorrectnessOutcome& v) {
  j = {{"ok", v.ok}, {"max_abs_err", v.max_abs_err}, {"max_rel_err", v.max_rel_err},
       {"cases_run", v.cases_run}};
}
void from_json(const nlohmann::json& j, CorrectnessOutcome& v) {
  get_opt(j, "ok", v.ok);
  get_opt(j, "max_abs_err", v.max_abs_err);
  get_opt(j, "max_rel_err", v.max_rel_err);
  get_opt(j, "cases_run", v.cases_run);
}
void to_json(nlohmann::json& j, const HackOutcome& v) {
  j = {{"kernel_executed", v.kernel_executed}, {"evidence", v.evidence}};
}
void from_json(const nlohmann::json& j, HackOutcome& v) {
  get_opt(j, "kernel_executed", v.kernel_executed);
  get_opt(j, "evidence", v.evidence);
}
void to_json(nlohmann::json& j, const TimingOutcome& v) {
  j = {{"baseline_samples_ns", v.baseline_samples_ns},
       {"candidate_samples_ns", v.candidate_samples_ns}};
}
void from_json(const nlohmann::json& j, TimingOutcome& v) {
  get_opt(j, "baseline_samples_ns", v.baseline_samples_ns);
  get_opt(j, "candidate_samples_ns", v.candidate_samples_ns);
}
void to_json(nlohmann::json& j, const FatalOutcome& v) {
  j = {{"phase", v.phase}, {"message", v.message}, {"traceback", v.traceback}};
}
void from_json(const nlohmann::json& j, FatalOutcome& v) {
  get_opt(j, "phase", v.phase);
  get_opt(j, "message", v.message);
  get_opt(j, "traceback", v.traceback);
}

void to_json(nlohmann::json& j, const SandboxRequest& v) {
  nlohmann::json plan = nlohmann::json::array();
  for (Phase p : v.phase_plan) plan.push_back(std::string(to_string(p)));
  j = {{"protocol_version", v.protocol_version},
       {"phase_plan", plan},
       {"reference_source", v.reference_source},
       {"candidate_source", v.candidate_source},
       {"target_class_name", v.target_class_name},
       {"test_input_spec", v.test_input_spec},
       {"tolerance", v.tolerance},
       {"timing", v.timing},
       {"timeouts", v.timeouts},
       {"execution_mode", std::string(to_string(v.execution_mode))},
       {"markers", v.markers},
       {"round", v.round}};
}

void from_json(const nlohmann::json& j, SandboxRequest& v) {
  v = SandboxRequest{};
  j.at("protocol_version").get_to(v.protocol_version);
  for (const auto& p : j.at("phase_plan")) v.phase_plan.push_back(phase_from_string(p.get<std::string>()));
  get_opt(j, "reference_source", v.reference_source);
  get_opt(j, "candidate_source", v.candidate_source);
  get_opt(j, "target_class_name", v.target_class_name);
  get_opt(j, "test_input_spec", v.test_input_spec);
  get_opt(j, "tolerance", v.tolerance);
  get_opt(j, "timing", v.timing);
  get_opt(j, "timeouts", v.timeouts);
  if (auto it = j.find("execution_mode"); it != j.end())
    v.execution_mode = execution_mode_from_string(it->get<std::string>());
  get_opt(j, "markers", v.markers);
  get_opt(j, "round", v.round);
}

void to_json(nlohmann::json& j, const SandboxResponse& v) {
  j = {{"protocol_version", v.protocol_version},
       {"compile", opt_json(v.compile)},
       {"correctness", opt_json(v.correctness)},
       {"hack", opt_json(v.hack)},
       {"timing", opt_json(v.timing)},
       {"fatal", opt_json(v.fatal)},
       {"hardware", v.hardware}};
}

void from_json(const nlohmann::json& j, SandboxResponse& v) {
  v = SandboxResponse{};
  get_opt(j, "protocol_version", v.protocol_version);
  get_opt(j, "compile", v.compile);
  get_opt(j, "correctness", v.correctness);
  get_opt(j, "hack", v.hack);
  get_opt(j, "timing", v.timing);
  get_opt(j, "fatal", v.fatal);
  get_opt(j, "hardware", v.hardware);
}

std::string encode_frame(const nlohmann::json& message) {
  const std::string body = message.dump();
  if (body.size() > kMaxFrameBytes) throw Error(ErrorCode::invalid_argument, "frame too large");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += body;
  return out;
}

std::optional<nlohmann::json> try_decode_frame(std::string& buffer) {
  if (buffer.size() < 4) return std::nullopt;
  const auto byte = [&](std::size_t i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(buffer[i]));
  };
  const std::uint32_t n = byte(0) << 24 | byte(1) << 16 | byte(2) << 8 | byte(3);
  if (n > kMaxFrameBytes) throw Error(ErrorCode::parse_error, "frame length exceeds limit");
  if (buffer.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  nlohmann::json message;
  try {
    message = nlohmann::json::parse(buffer.begin() + 4, buffer.begin() + 4 + n);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("malformed frame: ") + e.what());
  }
  buffer.erase(0, 4 + static_cast<std::size_t>(n));
  return message;
}

}  // namespace kevolve
