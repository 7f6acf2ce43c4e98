// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// JSON record format shared by every persisted file and the HTTP API.
// Field names mirror the struct members; timestamps are RFC 3339 UTC.

#include <nlohmann/json.hpp>

#include "kevolve/core/types.hpp"

namespace kevolve {

using nlohmann::json;

void to_json(json& j, Stage s);
void from_json(const json& j, Stage& s);
void to_json(json& j, Difficulty d);
void from_json(const json& j, Difficulty& d);
void to_json(json& j, const ToleranceConfig& v);
void from_json(const json& j, ToleranceConfig& v);
void to_json(json& j, const TimingConfig& v);
void from_json(const json& j, TimingConfig& v);
void to_json(json& j, const PhaseTimeouts& v);
void from_json(const json& j, PhaseTimeouts& v);
void to_json(json& j, const BaselineMode& v);
void from_json(const json& j, BaselineMode& v);
void to_json(json& j, const BlockMarkers& v);
void from_json(const json& j, BlockMarkers& v);
void to_json(json& j, const TaskSpec& v);
void from_json(const json& j, TaskSpec& v);
void to_json(json& j, const CandidateProgram& v);
void from_json(const json& j, CandidateProgram& v);
void to_json(json& j, const TimingStats& v);
void from_json(const json& j, TimingStats& v);
void to_json(json& j, const EvalResult& v);
void from_json(const json& j, EvalResult& v);
void to_json(json& j, const ScoreWeights& v);
void from_json(const json& j, ScoreWeights& v);

std::string format_rfc3339(Timestamp t);
Timestamp parse_rfc3339(const std::string& text);

// Reads a whole file; throws io_error.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
json read_json_file(const std::string& path);

// Loads a task file. A "reference_path" entry is resolved relative to the
// task file and replaces "reference_source".
TaskSpec load_task_file(const std::string& path);

}  // namespace kevolve
