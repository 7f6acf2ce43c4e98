// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/core/serialization.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kevolve/core/error.hpp"

namespace kevolve {

namespace {

template <typename T>
void get_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) it->get_to(out);
}

template <typename T>
void get_opt(const json& j, const char* key, std::optional<T>& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null())
    out = it->get<T>();
  else
    out.reset();
}

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

void to_json(json& j, Stage s) { j = std::string(to_string(s)); }
void from_json(const json& j, Stage& s) { s = stage_from_string(j.get<std::string>()); }
void to_json(json& j, Difficulty d) { j = std::string(to_string(d)); }
void from_json(const json& j, Difficulty& d) { d = difficulty_from_string(j.get<std::string>()); }

void to_json(json& j, const ToleranceConfig& v) {
  j = json{{"relative_tol", v.relative_tol}, {"absolute_tol", v.absolute_tol}};
}
void from_json(const json& j, ToleranceConfig& v) {
  get_opt(j, "relative_tol", v.relative_tol);
  get_opt(j, "absolute_tol", v.absolute_tol);
}

void to_json(json& j, const TimingConfig& v) {
  j = json{{"warmup_count", v.warmup_count},
           {"measure_count", v.measure_count},
           {"stability_threshold", v.stability_threshold},
           {"max_retry_rounds", v.max_retry_rounds}};
}
void from_json(const json& j, TimingConfig& v) {
  get_opt(j, "warmup_count", v.warmup_count);
  get_opt(j, "measure_count", v.measure_count);
  get_opt(j, "stability_threshold", v.stability_threshold);
  get_opt(j, "max_retry_rounds", v.max_retry_rounds);
}

void to_json(json& j, const PhaseTimeouts& v) {
  j = json{{"compile_s", v.compile_s}, {"correctness_s", v.correctness_s}, {"timing_s", v.timing_s}};
}
void from_json(const json& j, PhaseTimeouts& v) {
  get_opt(j, "compile_s", v.compile_s);
  get_opt(j, "correctness_s", v.correctness_s);
  get_opt(j, "timing_s", v.timing_s);
}

void to_json(json& j, const BaselineMode& v) {
  if (v.kind == BaselineMode::Kind::measure_reference)
    j = "measure_reference";
  else
    j = json{{"fixed_baseline_ns", v.fixed_ns}};
}
void from_json(const json& j, BaselineMode& v) {
  if (j.is_string()) {
    if (j.get<std::string>() != "measure_reference")
      throw Error(ErrorCode::parse_error, "unknown baseline_mode " + j.dump());
    v = BaselineMode::measure();
  } else {
    v = BaselineMode::fixed(j.at("fixed_baseline_ns").get<double>());
  }
}

void to_json(json& j, const BlockMarkers& v) {
  j = json{{"start_marker", v.start_marker}, {"end_marker", v.end_marker}};
}
void from_json(const json& j, BlockMarkers& v) {
  get_opt(j, "start_marker", v.start_marker);
  get_opt(j, "end_marker", v.end_marker);
}

void to_json(json& j, const TaskSpec& v) {
  j = json{{"task_id", v.task_id},
           {"reference_source", v.reference_source},
           {"target_class_name", v.target_class_name},
           {"backend_id", v.backend_id},
           {"test_input_spec", v.test_input_spec},
           {"tolerance", v.tolerance},
           {"timing", v.timing},
           {"timeouts", v.timeouts},
           {"difficulty_level", opt_json(v.difficulty_level)},
           {"baseline_mode", v.baseline_mode},
           {"markers", v.markers}};
}
void from_json(const json& j, TaskSpec& v) {
  v = TaskSpec{};
  j.at("task_id").get_to(v.task_id);
  get_opt(j, "reference_source", v.reference_source);
  get_opt(j, "target_class_name", v.target_class_name);
  get_opt(j, "backend_id", v.backend_id);
  get_opt(j, "test_input_spec", v.test_input_spec);
  get_opt(j, "tolerance", v.tolerance);
  get_opt(j, "timing", v.timing);
  get_opt(j, "timeouts", v.timeouts);
  get_opt(j, "difficulty_level", v.difficulty_level);
  get_opt(j, "baseline_mode", v.baseline_mode);
  get_opt(j, "markers", v.markers);
}

void to_json(json& j, const CandidateProgram& v) {
  j = json{{"candidate_id", v.candidate_id},
           {"task_id", v.task_id},
           {"parent_id", opt_json(v.parent_id)},
           {"generation", v.generation},
           {"island", v.island},
           {"full_source", v.full_source},
           {"evolve_block", v.evolve_block},
           {"model_id", v.model_id},
           {"prompt_hash", v.prompt_hash},
           {"created_at", format_rfc3339(v.created_at)}};
}
void from_json(const json& j, CandidateProgram& v) {
  v = CandidateProgram{};
  j.at("candidate_id").get_to(v.candidate_id);
  get_opt(j, "task_id", v.task_id);
  get_opt(j, "parent_id", v.parent_id);
  get_opt(j, "generation", v.generation);
  get_opt(j, "island", v.island);
  get_opt(j, "full_source", v.full_source);
  get_opt(j, "evolve_block", v.evolve_block);
  get_opt(j, "model_id", v.model_id);
  get_opt(j, "prompt_hash", v.prompt_hash);
  if (auto it = j.find("created_at"); it != j.end() && !it->is_null())
    v.created_at = parse_rfc3339(it->get<std::string>());
}

void to_json(json& j, const TimingStats& v) {
  j = json{{"raw_samples", v.raw_samples}, {"kept_count", v.kept_count},
           {"dropped_count", v.dropped_count}, {"trimmed_mean", v.trimmed_mean},
           {"std_dev", v.std_dev}, {"cv", v.cv}};
}
void from_json(const json& j, TimingStats& v) {
  v = TimingStats{};
  get_opt(j, "raw_samples", v.raw_samples);
  get_opt(j, "kept_count", v.kept_count);
  get_opt(j, "dropped_count", v.dropped_count);
  get_opt(j, "trimmed_mean", v.trimmed_mean);
  get_opt(j, "std_dev", v.std_dev);
  get_opt(j, "cv", v.cv);
}

void to_json(json& j, const EvalResult& v) {
  j = json{{"candidate_id", v.candidate_id},
           {"compiled", v.compiled},
           {"correct", v.correct},
           {"hack_detected", v.hack_detected},
           {"stage", v.stage},
           {"candidate_timing", opt_json(v.candidate_timing)},
           {"baseline_timing", opt_json(v.baseline_timing)},
           {"speedup", opt_json(v.speedup)},
           {"score", v.score},
           {"error_log", v.error_log},
           {"hardware_metadata", v.hardware_metadata}};
}
void from_json(const json& j, EvalResult& v) {
  v = EvalResult{};
  j.at("candidate_id").get_to(v.candidate_id);
  get_opt(j, "compiled", v.compiled);
  get_opt(j, "correct", v.correct);
  get_opt(j, "hack_detected", v.hack_detected);
  get_opt(j, "stage", v.stage);
  get_opt(j, "candidate_timing", v.candidate_timing);
  get_opt(j, "baseline_timing", v.baseline_timing);
  get_opt(j, "speedup", v.speedup);
  get_opt(j, "score", v.score);
  get_opt(j, "error_log", v.error_log);
  get_opt(j, "hardware_metadata", v.hardware_metadata);
}

void to_json(json& j, const ScoreWeights& v) {
  j = json{{"compile_credit", v.compile_credit}, {"correct_credit", v.correct_credit},
           {"speedup_weight", v.speedup_weight}, {"speedup_cap", v.speedup_cap}};
}
void from_json(const json& j, ScoreWeights& v) {
  get_opt(j, "compile_credit", v.compile_credit);
  get_opt(j, "correct_credit", v.correct_credit);
  get_opt(j, "speedup_weight", v.speedup_weight);
  get_opt(j, "speedup_cap", v.speedup_cap);
}

std::string format_rfc3339(Timestamp t) {
  using namespace std::chrono;
  const auto secs = floor<seconds>(t);
  const auto nanos = (t - secs).count();
  const std::time_t tt = Clock::to_time_t(time_point_cast<Clock::duration>(secs));
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%09lldZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<long long>(nanos));
  return buf;
}

Timestamp parse_rfc3339(const std::string& text) {
  std::tm tm{};
  const char* rest = strptime(text.c_str(), "%Y-%m-%dT%H:%M:%S", &tm);
  if (!rest) throw Error(ErrorCode::parse_error, "bad timestamp '" + text + "'");
  long long nanos = 0;
  if (*rest == '.') {
    ++rest;
    long long scale = 100000000;
    while (*rest >= '0' && *rest <= '9') {
      nanos += (*rest - '0') * scale;
      scale /= 10;
      ++rest;
    }
  }
  long offset_s = 0;
  if (*rest == '+' || *rest == '-') {
    int hh = 0, mm = 0;
    if (std::sscanf(rest + 1, "%2d:%2d", &hh, &mm) != 2)
      throw Error(ErrorCode::parse_error, "bad timestamp offset '" + text + "'");
    offset_s = (hh * 3600 + mm * 60) * (*rest == '-' ? -1 : 1);
  } else if (*rest != 'Z' && *rest != 'z') {
    throw Error(ErrorCode::parse_error, "timestamp needs a zone '" + text + "'");
  }
  const std::time_t tt = timegm(&tm) - offset_s;
  return Timestamp(std::chrono::seconds(tt)) + std::chrono::nanoseconds(nanos);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorCode::io_error, "short write to " + path);
}

json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, path + ": " + e.what());
  }
}

TaskSpec load_task_file(const std::string& path) {
  json j = read_json_file(path);
  if (auto it = j.find("reference_path"); it != j.end()) {
    const auto ref = std::filesystem::path(path).parent_path() / it->get<std::string>();
    j["reference_source"] = read_text_file(ref.string());
  }
  TaskSpec task = j.get<TaskSpec>();
  task.validate();
  return task;
}

}  // namespace kevolve
