// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

// Test double for an external sandbox runner. Reads one request frame from
// stdin and answers according to the mode in argv[1].

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <thread>

#include "kevolve/eval/backend.hpp"
#include "kevolve/eval/sandbox_protocol.hpp"

using namespace kevolve;

namespace {

std::optional<nlohmann::json> read_request() {
  std::string buffer;
  char chunk[4096];
  for (;;) {
    if (auto frame = try_decode_frame(buffer)) return frame;
    const ssize_t n = ::read(STDIN_FILENO, chunk, sizeof chunk);
    if (n <= 0) return std::nullopt;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

void write_all(const std::string& bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::write(STDOUT_FILENO, bytes.data() + off, bytes.size() - off);
    if (n <= 0) return;
    off += static_cast<std::size_t>(n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "sim";
  if (mode == "hang") {
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(1));
  }
  const auto request = read_request();
  if (!request) return 3;
  if (mode == "silent") return 0;
  if (mode == "garbage") {
    write_all("not a frame at all");
    return 0;
  }
  SandboxResponse response;
  if (mode == "version") {
    response.protocol_version = "0";
  } else if (mode == "protocol") {
    response.fatal = FatalOutcome{"protocol", "unsupported request", ""};
  } else if (mode == "crash") {
    response.compile = CompileOutcome{true, ""};
    response.fatal = FatalOutcome{"correctness", "RuntimeError: illegal memory access", "Traceback: kernel.py:12"};
  } else {
    SimulatedBackend sim;
    response = sim.run(request->get<SandboxRequest>());
    response.hardware["runner"] = "stub";
  }
  write_all(encode_frame(nlohmann::json(response)));
  return 0;
}
