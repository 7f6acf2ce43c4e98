// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kevolve/eval/sandbox_protocol.hpp"

namespace kevolve {

struct BackendDescriptor {
  enum class Kind { simulated, external_sandbox };

  std::string backend_id;
  Kind kind = Kind::simulated;
  std::string endpoint_or_command;
  std::map<std::string, std::string> capabilities;

  bool operator==(const BackendDescriptor&) const = default;
};

void to_json(nlohmann::json& j, const BackendDescriptor& v);
void from_json(const nlohmann::json& j, BackendDescriptor& v);

// Executes one sandbox request. Candidate failures come back inside the
// response; transport failures throw backend_unavailable.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual SandboxResponse run(const SandboxRequest& request) = 0;
};

// Outcome overrides understood by the simulated backend, from rule-table
// entries or "@sim key=value ..." directive lines in the source.
struct SimulatedOutcome {
  std::optional<bool> compile_ok;
  std::optional<bool> run_ok;
  std::optional<bool> correct;
  std::optional<bool> kernel_executed;
  std::optional<double> runtime_ns;
  std::optional<double> noise_cv;
  std::optional<Phase> hang;  // behaves as if the phase exceeded its cap
  std::optional<std::string> log;

  void merge(const SimulatedOutcome& over);
};

// Parses every "@sim" directive line of source, later lines overriding
// earlier ones. Throws parse_error on malformed directives.
SimulatedOutcome parse_sim_directives(const std::string& source);

// Seeded synthetic timing: runtime * max(0.01, 1 + cv * z) with z standard
// normal.
std::vector<double> synthesize_samples(double runtime_ns, double cv, std::size_t count,
                                       std::uint64_t seed);

// Deterministic in-process evaluator driven by the task's rule table:
//   {"baseline_runtime_ns": 100, "noise_cv": 0, "noise_seed": 0,
//    "rules": [{"contains" | "fingerprint": "...", "outcome": {...}}]}
// Outcome keys match the directive keys: compile, run, correct, kernel,
// runtime_ns, noise_cv, hang, log.
class SimulatedBackend final : public Backend {
 public:
  SandboxResponse run(const SandboxRequest& request) override;

  static std::map<std::string, std::string> hardware();
};

// Spawns endpoint_or_command through /bin/sh for each request and speaks
// the framed protocol over its stdin/stdout.
class ProcessSandboxBackend final : public Backend {
 public:
  explicit ProcessSandboxBackend(std::string command, double deadline_slack_s = 10.0);
  SandboxResponse run(const SandboxRequest& request) override;

 private:
  std::string command_;
  double deadline_slack_s_;
};

std::shared_ptr<Backend> make_backend(const BackendDescriptor& descriptor);

// Registry file: a JSON array of descriptors.
std::vector<BackendDescriptor> load_backend_registry(const std::string& path);

}  // namespace kevolve
