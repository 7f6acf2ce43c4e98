// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Wire contract between the orchestrator and execution backends. Frames are
// a 4-byte big-endian length followed by that many bytes of UTF-8 JSON.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kevolve/core/types.hpp"

namespace kevolve {

inline constexpr const char* kSandboxProtocolVersion = "1";
inline constexpr std::uint32_t kMaxFrameBytes = 256u << 20;

enum class Phase { compile, correctness, hack, baseline_timing, candidate_timing };

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view name);

enum class ExecutionMode { inline_script, tensor_module, gpu_kernel };

std::string_view to_string(ExecutionMode mode);
ExecutionMode execution_mode_from_string(std::string_view name);

struct SandboxRequest {
  std::string protocol_version = kSandboxProtocolVersion;
  std::vector<Phase> phase_plan;
  std::string reference_source;
  std::string candidate_source;
  std::string target_class_name;
  nlohmann::json test_input_spec = nlohmann::json::object();
  ToleranceConfig tolerance;
  TimingConfig timing;
  PhaseTimeouts timeouts;
  ExecutionMode execution_mode = ExecutionMode::inline_script;
  BlockMarkers markers;
  std::uint32_t round = 0;  // timing retry round, 0 for the first pass

  bool operator==(const SandboxRequest&) const = default;
};

struct CompileOutcome {
  bool ok = false;
  std::string log;
  bool operator==(const CompileOutcome&) const = default;
};

struct CorrectnessOutcome {
  bool ok = false;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::uint32_t cases_run = 0;
  bool operator==(const CorrectnessOutcome&) const = default;
};

struct HackOutcome {
  bool kernel_executed = false;
  std::string evidence;
  bool operator==(const HackOutcome&) const = default;
};

struct TimingOutcome {
  std::vector<double> baseline_samples_ns;
  std::vector<double> candidate_samples_ns;
  bool operator==(const TimingOutcome&) const = default;
};

struct FatalOutcome {
  std::string phase;
  std::string message;
  std::string traceback;
  bool operator==(const FatalOutcome&) const = default;
};

// Absent phases were skipped because an earlier one failed.
struct SandboxResponse {
  std::string protocol_version = kSandboxProtocolVersion;
  std::optional<CompileOutcome> compile;
  std::optional<CorrectnessOutcome> correctness;
  std::optional<HackOutcome> hack;
  std::optional<TimingOutcome> timing;
  std::optional<FatalOutcome> fatal;
  std::map<std::string, std::string> hardware;

  bool operator==(const SandboxResponse&) const = default;
};

void to_json(nlohmann::json& j, const SandboxRequest& v);
void from_json(const nlohmann::json& j, SandboxRequest& v);
void to_json(nlohmann::json& j, const SandboxResponse& v);
void from_json(const nlohmann::json& j, SandboxResponse& v);

std::string encode_frame(const nlohmann::json& message);

// Pops one complete frame from the front of buffer, or returns nullopt when
// more bytes are needed. Throws parse_error on oversize or malformed JSON.
std::optional<nlohmann::json> try_decode_frame(std::string& buffer);

}  // namespace kevolve
