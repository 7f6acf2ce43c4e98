// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cctype>
#include <sstream>

#include "kevolve/core/digest.hpp"
#include "kevolve/core/error.hpp"
#include "kevolve/core/rng.hpp"
#include "kevolve/core/serialization.hpp"
#include "kevolve/eval/backend.hpp"

namespace kevolve {

namespace {

constexpr std::string_view kDirective = "@sim";

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t source_seed(const std::string& source) {
  return std::stoull(sha256_hex(source).substr(0, 16), nullptr, 16);
}

bool parse_flag(const std::string& key, const std::string& value, const char* yes,
                const char* no) {
  if (value == yes || value == "1" || value == "true") return true;
  if (value == no || value == "0" || value == "false") return false;
  throw Error(ErrorCode::parse_error, "bad value '" + value + "' for " + key);
}

double parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::parse_error, "bad number '" + value + "' for " + key);
  }
}

Phase parse_hang(const std::string& value) {
  if (value == "timing") return Phase::candidate_timing;
  return phase_from_string(value);
}

void apply_key(SimulatedOutcome& out, const std::string& key, const std::string& value) {
  if (key == "compile")
    out.compile_ok = parse_flag(key, value, "ok", "fail");
  else if (key == "run")
    out.run_ok = parse_flag(key, value, "ok", "error");
  else if (key == "correct")
    out.correct = parse_flag(key, value, "1", "0");
  else if (key == "kernel")
    out.kernel_executed = parse_flag(key, value, "1", "0");
  else if (key == "runtime_ns") {
    out.runtime_ns = parse_number(key, value);
    if (!(*out.runtime_ns > 0.0)) throw Error(ErrorCode::parse_error, "runtime_ns must be > 0");
  } else if (key == "noise_cv") {
    out.noise_cv = parse_number(key, value);
    if (*out.noise_cv < 0.0) throw Error(ErrorCode::parse_error, "noise_cv must be >= 0");
  } else if (key == "hang")
    out.hang = parse_hang(value);
  else if (key == "log")
    out.log = value;
  else
    throw Error(ErrorCode::parse_error, "unknown simulated outcome key '" + key + "'");
}

SimulatedOutcome outcome_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_rule_table, "rule outcome must be an object");
  SimulatedOutcome out;
  for (const auto& [key, value] : j.items()) {
    std::string text;
    if (value.is_string())
      text = value.get<std::string>();
    else if (value.is_boolean())
      text = value.get<bool>() ? "1" : "0";
    else if (value.is_number())
      text = value.dump();
    else
      throw Error(ErrorCode::invalid_rule_table, "outcome value for '" + key + "' must be scalar");
    try {
      apply_key(out, key, text);
    } catch (const Error& e) {
      throw Error(ErrorCode::invalid_rule_table, e.what());
    }
  }
  return out;
}

struct Rule {
  std::optional<std::string> contains;
  std::optional<std::string> fingerprint;
  SimulatedOutcome outcome;
};

struct RuleTable {
  double baseline_runtime_ns = 100.0;
  double noise_cv = 0.0;
  std::uint64_t noise_seed = 0;
  std::uint32_t cases = 1;
  std::vector<Rule> rules;
};

RuleTable parse_rule_table(const nlohmann::json& spec) {
  if (!spec.is_object()) throw Error(ErrorCode::invalid_rule_table, "test_input_spec must be an object");
  RuleTable table;
  try {
    if (auto it = spec.find("baseline_runtime_ns"); it != spec.end())
      table.baseline_runtime_ns = it->get<double>();
    if (auto it = spec.find("noise_cv"); it != spec.end()) table.noise_cv = it->get<double>();
    if (auto it = spec.find("noise_seed"); it != spec.end())
      table.noise_seed = it->get<std::uint64_t>();
    if (auto it = spec.find("cases"); it != spec.end()) table.cases = it->get<std::uint32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_rule_table, e.what());
  }
  if (!(table.baseline_runtime_ns > 0.0))
    throw Error(ErrorCode::invalid_rule_table, "baseline_runtime_ns must be > 0");
  if (table.noise_cv < 0.0) throw Error(ErrorCode::invalid_rule_table, "noise_cv must be >= 0");

  if (auto it = spec.find("rules"); it != spec.end()) {
    if (!it->is_array()) throw Error(ErrorCode::invalid_rule_table, "rules must be an array");
    for (const auto& r : *it) {
      if (!r.is_object()) throw Error(ErrorCode::invalid_rule_table, "rule must be an object");
      Rule rule;
      if (auto c = r.find("contains"); c != r.end() && c->is_string())
        rule.contains = c->get<std::string>();
      if (auto f = r.find("fingerprint"); f != r.end() && f->is_string())
        rule.fingerprint = f->get<std::string>();
      if (rule.contains.has_value() == rule.fingerprint.has_value())
        throw Error(ErrorCode::invalid_rule_table,
                    "rule needs exactly one of 'contains' or 'fingerprint'");
      if (!r.contains("outcome")) throw Error(ErrorCode::invalid_rule_table, "rule lacks outcome");
      rule.outcome = outcome_from_json(r.at("outcome"));
      table.rules.push_back(std::move(rule));
    }
  }
  return table;
}

struct Resolved {
  bool compile_ok = true;
  bool run_ok = true;
  bool correct = true;
  bool kernel_executed = true;
  double runtime_ns = 0.0;
  double noise_cv = 0.0;
  std::optional<Phase> hang;
  std::string log;
  std::string directive_error;
};

Resolved resolve(const std::string& source, const RuleTable& table) {
  SimulatedOutcome merged;
  const std::string fp = sha256_hex(source);
  for (const auto& rule : table.rules) {
    const bool hit = rule.contains ? source.find(*rule.contains) != std::string::npos
                                   : *rule.fingerprint == fp;
    if (hit) {
      merged.merge(rule.outcome);
      break;
    }
  }
  Resolved r;
  try {
    merged.merge(parse_sim_directives(source));
  } catch (const Error& e) {
    r.directive_error = e.what();
  }
  r.compile_ok = merged.compile_ok.value_or(true);
  r.run_ok = merged.run_ok.value_or(true);
  r.correct = merged.correct.value_or(true);
  r.kernel_executed = merged.kernel_executed.value_or(true);
  r.runtime_ns = merged.runtime_ns.value_or(table.baseline_runtime_ns);
  r.noise_cv = merged.noise_cv.value_or(table.noise_cv);
  r.hang = merged.hang;
  r.log = merged.log.value_or("");
  return r;
}

std::string phase_cap_message(Phase phase, const PhaseTimeouts& caps) {
  double cap = caps.timing_s;
  if (phase == Phase::compile) cap = caps.compile_s;
  if (phase == Phase::correctness || phase == Phase::hack) cap = caps.correctness_s;
  std::ostringstream out;
  out << "timeout: " << to_string(phase) << " phase exceeded " << cap << " s wall-clock cap";
  return out.str();
}

std::uint64_t timing_seed(const RuleTable& table, const std::string& source, Phase phase,
                          std::uint32_t round) {
  std::uint64_t s = splitmix64(table.noise_seed);
  s = splitmix64(s ^ source_seed(source));
  s = splitmix64(s ^ static_cast<std::uint64_t>(phase));
  return splitmix64(s ^ round);
}

}  // namespace

void SimulatedOutcome::merge(const SimulatedOutcome& over) {
  if (over.compile_ok) compile_ok = over.compile_ok;
  if (over.run_ok) run_ok = over.run_ok;
  if (over.correct) correct = over.correct;
  if (over.kernel_executed) kernel_executed = over.kernel_executed;
  if (over.runtime_ns) runtime_ns = over.runtime_ns;
  if (over.noise_cv) noise_cv = over.noise_cv;
  if (over.hang) hang = over.hang;
  if (over.log) log = over.log;
}

SimulatedOutcome parse_sim_directives(const std::string& source) {
  SimulatedOutcome out;
  std::istringstream lines(source);
  std::string line;
  while (std::getline(lines, line)) {
    const auto at = line.find(kDirective);
    if (at == std::string::npos) continue;
    std::size_t i = at + kDirective.size();
    if (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) continue;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i >= line.size()) break;
      const auto eq = line.find('=', i);
      if (eq == std::string::npos)
        throw Error(ErrorCode::parse_error, "directive token without '=' in: " + line);
      const std::string key = line.substr(i, eq - i);
      i = eq + 1;
      std::string value;
      if (i < line.size() && line[i] == '"') {
        const auto close = line.find('"', i + 1);
        if (close == std::string::npos)
          throw Error(ErrorCode::parse_error, "unterminated quote in: " + line);
        value = line.substr(i + 1, close - i - 1);
        i = close + 1;
      } else {
        const auto start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        value = line.substr(start, i - start);
      }
      apply_key(out, key, value);
    }
  }
  return out;
}

std::vector<double> synthesize_samples(double runtime_ns, double cv, std::size_t count,
                                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double factor = cv == 0.0 ? 1.0 : std::max(0.01, 1.0 + cv * rng.normal());
    out.push_back(runtime_ns * factor);
  }
  return out;
}

std::map<std::string, std::string> SimulatedBackend::hardware() {
  return {{"backend", "simulated"}, {"device", "simulated-device"}};
}

SandboxResponse SimulatedBackend::run(const SandboxRequest& request) {
  if (request.protocol_version != kSandboxProtocolVersion)
    return SandboxResponse{.fatal = FatalOutcome{"protocol", "protocol version mismatch: got " +
                                                                 request.protocol_version, ""}};
  const RuleTable table = parse_rule_table(request.test_input_spec);
  const Resolved cand = resolve(request.candidate_source, table);

  SandboxResponse response;
  response.hardware = hardware();
  const auto fatal = [&](Phase phase, std::string message) {
    response.fatal = FatalOutcome{std::string(to_string(phase)), std::move(message), ""};
    return response;
  };

  for (Phase phase : request.phase_plan) {
    switch (phase) {
      case Phase::compile:
        if (!cand.directive_error.empty()) {
          response.compile = CompileOutcome{false, "invalid simulation directive: " + cand.directive_error};
          return response;
        }
        if (cand.hang == Phase::compile) return fatal(phase, phase_cap_message(phase, request.timeouts));
        response.compile = CompileOutcome{cand.compile_ok, cand.compile_ok ? "" : (cand.log.empty() ? "compilation failed" : cand.log)};
        if (!cand.compile_ok) return response;
        break;
      case Phase::correctness: {
        if (cand.hang == Phase::correctness) return fatal(phase, phase_cap_message(phase, request.timeouts));
        if (!cand.run_ok) return fatal(phase, cand.log.empty() ? "runtime error" : cand.log);
        CorrectnessOutcome c{cand.correct, cand.correct ? 0.0 : 1.0, cand.correct ? 0.0 : 1.0,
                             table.cases};
        response.correctness = c;
        if (!c.ok) return response;
        break;
      }
      case Phase::hack:
        if (cand.hang == Phase::hack) return fatal(phase, phase_cap_message(phase, request.timeouts));
        response.hack = HackOutcome{cand.kernel_executed,
                                    cand.kernel_executed ? "block-defined callables executed"
                                                         : "no block-defined callable executed"};
        if (!cand.kernel_executed) return response;
        break;
      case Phase::baseline_timing: {
        const Resolved ref = resolve(request.reference_source, table);
        if (!response.timing) response.timing = TimingOutcome{};
        response.timing->baseline_samples_ns =
            synthesize_samples(ref.runtime_ns, ref.noise_cv, request.timing.measure_count,
                               timing_seed(table, request.reference_source, phase, request.round));
        break;
      }
      case Phase::candidate_timing:
        if (cand.hang == Phase::candidate_timing)
          return fatal(phase, phase_cap_message(phase, request.timeouts));
        if (!cand.run_ok) return fatal(phase, cand.log.empty() ? "runtime error" : cand.log);
        if (!response.timing) response.timing = TimingOutcome{};
        // Seeded by source alone, so the reference timed as a candidate
        // matches its own baseline samples.
        response.timing->candidate_samples_ns =
            synthesize_samples(cand.runtime_ns, cand.noise_cv, request.timing.measure_count,
                               timing_seed(table, request.candidate_source,
                                           Phase::baseline_timing, request.round));
        break;
    }
  }
  return response;
}

}  // namespace kevolve
