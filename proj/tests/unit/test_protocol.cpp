// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "kevolve/core/error.hpp"
#include "kevolve/core/rng.hpp"
#include "kevolve/core/serialization.hpp"
#include "kevolve/eval/backend.hpp"
#include "kevolve/eval/eval_service.hpp"
#include "kevolve/eval/sandbox_protocol.hpp"
#include "test_support.hpp"

using namespace kevolve;

namespace {

std::string random_text(Rng& rng, std::size_t max_len) {
  static const char* pieces[] = {"a", "Z", "0", " ", "\n", "\t", "\"", "\\", "{", "}", "\xc3\xa9", "\xe2\x82\xac",
                                 "\xf0\x9f\x98\x80", "\x01", "@sim", "#"};
  std::string out;
  const std::size_t n = rng.index(max_len + 1);
  for (std::size_t i = 0; i < n; ++i) out += pieces[rng.index(std::size(pieces))];
  return out;
}

SandboxRequest random_request(Rng& rng) {
  SandboxRequest r;
  const Phase all[] = {Phase::compile, Phase::correctness, Phase::hack, Phase::baseline_timing,
                       Phase::candidate_timing};
  for (Phase p : all)
    if (rng.uniform01() < 0.6) r.phase_plan.push_back(p);
  r.reference_source = random_text(rng, 200);
  r.candidate_source = random_text(rng, 200);
  r.target_class_name = random_text(rng, 10);
  r.test_input_spec = {{"k", random_text(rng, 8)}, {"n", rng.uniform01()}, {"arr", {1, 2, rng.index(100)}}};
  r.tolerance = {rng.uniform01(), rng.uniform01() + 1e-9};
  r.timing.warmup_count = static_cast<std::uint32_t>(rng.index(20));
  r.timing.measure_count = static_cast<std::uint32_t>(2 + rng.index(200));
  r.timing.stability_threshold = 0.001 + 0.5 * rng.uniform01();
  r.timeouts = {rng.uniform01() * 100, rng.uniform01() * 100, rng.uniform01() * 100};
  r.execution_mode = static_cast<ExecutionMode>(rng.index(3));
  r.round = static_cast<std::uint32_t>(rng.index(4));
  return r;
}

SandboxResponse random_response(Rng& rng) {
  SandboxResponse r;
  if (rng.uniform01() < 0.8) r.compile = CompileOutcome{rng.uniform01() < 0.5, random_text(rng, 50)};
  if (rng.uniform01() < 0.6)
    r.correctness = CorrectnessOutcome{rng.uniform01() < 0.5, rng.uniform01(), rng.uniform01() * 1e-3,
                                       static_cast<std::uint32_t>(rng.index(10))};
  if (rng.uniform01() < 0.5) r.hack = HackOutcome{rng.uniform01() < 0.5, random_text(rng, 30)};
  if (rng.uniform01() < 0.5) {
    TimingOutcome t;
    for (std::size_t i = rng.index(50); i > 0; --i) t.baseline_samples_ns.push_back(1.0 + rng.uniform01() * 1e6);
    for (std::size_t i = rng.index(50); i > 0; --i) t.candidate_samples_ns.push_back(1.0 + rng.uniform01() * 1e6);
    r.timing = t;
  }
  if (rng.uniform01() < 0.2) r.fatal = FatalOutcome{"correctness", random_text(rng, 40), random_text(rng, 80)};
  r.hardware["device"] = random_text(rng, 12);
  return r;
}

SandboxRequest simple_request(const std::string& candidate) {
  SandboxRequest r;
  r.phase_plan = {Phase::compile, Phase::correctness, Phase::hack, Phase::baseline_timing, Phase::candidate_timing};
  r.reference_source = "ref";
  r.candidate_source = candidate;
  r.target_class_name = "ModelNew";
  r.test_input_spec = {{"baseline_runtime_ns", 100.0}, {"noise_cv", 0.002}};
  r.timing.measure_count = 20;
  return r;
}

std::string stub(const std::string& mode) { return std::string(KEVOLVE_STUB_RUNNER) + " " + mode; }

}  // namespace

TEST_CASE("frames carry a big-endian length prefix", "[protocol]") {
  const nlohmann::json msg = {{"a", 1}};
  const std::string frame = encode_frame(msg);
  const std::string body = msg.dump();
  REQUIRE(frame.size() == 4 + body.size());
  CHECK(static_cast<unsigned char>(frame[0]) == 0);
  CHECK(static_cast<unsigned char>(frame[1]) == 0);
  CHECK(static_cast<unsigned char>(frame[2]) == 0);
  CHECK(static_cast<unsigned char>(frame[3]) == body.size());
  CHECK(frame.substr(4) == body);
}

TEST_CASE("frames decode incrementally and back to back", "[protocol]") {
  const std::string bytes = encode_frame({{"n", 1}}) + encode_frame({{"n", 2}});
  std::string buffer;
  std::vector<nlohmann::json> got;
  for (char c : bytes) {
    buffer.push_back(c);
    while (auto f = try_decode_frame(buffer)) got.push_back(*f);
  }
  REQUIRE(got.size() == 2);
  CHECK(got[0]["n"] == 1);
  CHECK(got[1]["n"] == 2);
  CHECK(buffer.empty());
}

TEST_CASE("oversize and malformed frames are rejected", "[protocol]") {
  std::string huge("\xff\xff\xff\xff", 4);
  CHECK_THROWS_AS(try_decode_frame(huge), Error);
  std::string bad = std::string("\0\0\0\x03", 4) + "{x}";
  CHECK_THROWS_AS(try_decode_frame(bad), Error);
}

TEST_CASE("request and response round-trip through frames", "[protocol]") {
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    const SandboxRequest req = random_request(rng);
    std::string buf = encode_frame(nlohmann::json(req));
    const auto decoded = try_decode_frame(buf);
    REQUIRE(decoded);
    REQUIRE(decoded->get<SandboxRequest>() == req);

    const SandboxResponse resp = random_response(rng);
    buf = encode_frame(nlohmann::json(resp));
    REQUIRE(try_decode_frame(buf)->get<SandboxResponse>() == resp);
  }
}

TEST_CASE("process backend matches the simulated backend through a stub runner", "[protocol]") {
  ProcessSandboxBackend process(stub("sim"));
  SimulatedBackend sim;
  for (const std::string candidate : {"fast # @sim runtime_ns=50", "broken # @sim compile=fail",
                                      "wrong # @sim correct=0", "hack # @sim kernel=0"}) {
    const auto req = simple_request(candidate);
    auto via_process = process.run(req);
    CHECK(via_process.hardware.at("runner") == "stub");
    via_process.hardware.erase("runner");
    CHECK(via_process == sim.run(req));
  }
}

TEST_CASE("runner protocol violations are infrastructure failures", "[protocol]") {
  const auto req = simple_request("x");
  for (const std::string mode : {"version", "protocol", "garbage", "silent"}) {
    ProcessSandboxBackend b(stub(mode));
    try {
      b.run(req);
      FAIL("expected backend_unavailable for mode " << mode);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::backend_unavailable);
    }
  }
  ProcessSandboxBackend missing("/nonexistent/runner-binary");
  CHECK_THROWS_AS(missing.run(req), Error);
}

TEST_CASE("a runner that never answers is killed at the deadline", "[protocol]") {
  auto req = simple_request("x");
  req.timeouts = {0.1, 0.1, 0.1};
  ProcessSandboxBackend b(stub("hang"), 0.2);
  const auto start = std::chrono::steady_clock::now();
  const auto resp = b.run(req);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  REQUIRE(resp.fatal);
  CHECK(resp.fatal->message.find("timeout") != std::string::npos);
  CHECK(elapsed < 5.0);
}

TEST_CASE("orchestration maps runner fatals and deadlines to candidate failures", "[protocol]") {
  TaskSpec task = testing_support::simple_task();
  task.backend_id = "stub";
  task.timeouts = {0.1, 0.1, 0.1};
  CandidateProgram c = testing_support::seed_candidate(task);

  BackendDescriptor crash{"stub", BackendDescriptor::Kind::external_sandbox, stub("crash"), {}};
  ProcessSandboxBackend crash_backend(crash.endpoint_or_command);
  const EvalResult crashed = orchestrate_evaluation(task, c, crash_backend, crash, {});
  CHECK(crashed.stage == Stage::runtime_error);
  CHECK(crashed.error_log.find("illegal memory access") != std::string::npos);
  CHECK(crashed.error_log.find("kernel.py:12") != std::string::npos);
  CHECK(crashed.score == 1.0);

  BackendDescriptor hang{"stub", BackendDescriptor::Kind::external_sandbox, stub("hang"), {}};
  ProcessSandboxBackend hang_backend(hang.endpoint_or_command, 0.2);
  const EvalResult hung = orchestrate_evaluation(task, c, hang_backend, hang, {});
  CHECK(hung.error_log.find("timeout") != std::string::npos);
  CHECK_FALSE(hung.correct);
}

TEST_CASE("backend registry files", "[protocol]") {
  testing_support::TempDir dir;
  const std::string path = dir.str() + "/backends.json";
  write_text_file(path, R"([{"backend_id": "sandbox", "kind": "external_sandbox",
                           "endpoint_or_command": "python3 -m runner", "capabilities": {"device": "cpu"}}])");
  const auto reg = load_backend_registry(path);
  REQUIRE(reg.size() == 1);
  CHECK(reg[0].backend_id == "sandbox");
  CHECK(reg[0].kind == BackendDescriptor::Kind::external_sandbox);
  CHECK(reg[0].capabilities.at("device") == "cpu");
  CHECK(nlohmann::json(reg[0]).get<BackendDescriptor>() == reg[0]);
  write_text_file(path, R"({"not": "an array"})");
  CHECK_THROWS_AS(load_backend_registry(path), Error);
}
