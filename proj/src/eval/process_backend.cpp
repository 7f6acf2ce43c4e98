// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <sstream>

#include "kevolve/core/error.hpp"
#include "kevolve/core/serialization.hpp"
#include "kevolve/eval/backend.hpp"

namespace kevolve {

namespace {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    reset();
    fd_ = std::exchange(o.fd_, -1);
    return *this;
  }
  ~Fd() { reset(); }

  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

std::pair<Fd, Fd> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0)
    throw Error(ErrorCode::backend_unavailable, std::string("pipe: ") + std::strerror(errno));
  return {Fd(fds[0]), Fd(fds[1])};
}

double plan_budget_s(const SandboxRequest& request) {
  double total = 0.0;
  bool timing_counted = false;
  for (Phase p : request.phase_plan) {
    if (p == Phase::compile) total += request.timeouts.compile_s;
    if (p == Phase::correctness || p == Phase::hack) total += request.timeouts.correctness_s;
    if ((p == Phase::baseline_timing || p == Phase::candidate_timing) && !timing_counted) {
      total += request.timeouts.timing_s;
      timing_counted = true;
    }
  }
  return total;
}

struct ChildProcess {
  pid_t pid = -1;

  void kill_group() const {
    if (pid > 0) ::kill(-pid, SIGKILL);
  }
  int wait() {
    int status = 0;
    while (pid > 0 && ::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    pid = -1;
    return status;
  }
};

}  // namespace

ProcessSandboxBackend::ProcessSandboxBackend(std::string command, double deadline_slack_s)
    : command_(std::move(command)), deadline_slack_s_(deadline_slack_s) {
  // A runner that exits early must not kill us through a write to its
  // closed stdin.
  ::signal(SIGPIPE, SIG_IGN);
}

SandboxResponse ProcessSandboxBackend::run(const SandboxRequest& request) {
  const std::string frame = encode_frame(nlohmann::json(request));
  auto [child_stdin_r, child_stdin_w] = make_pipe();
  auto [child_stdout_r, child_stdout_w] = make_pipe();

  ChildProcess child;
  child.pid = ::fork();
  if (child.pid < 0)
    throw Error(ErrorCode::backend_unavailable, std::string("fork: ") + std::strerror(errno));
  if (child.pid == 0) {
    ::setpgid(0, 0);
    ::dup2(child_stdin_r.get(), STDIN_FILENO);
    ::dup2(child_stdout_w.get(), STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(child.pid, child.pid);
  child_stdin_r.reset();
  child_stdout_w.reset();
  ::fcntl(child_stdin_w.get(), F_SETFL, O_NONBLOCK);

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(plan_budget_s(request) + deadline_slack_s_);
  std::size_t written = 0;
  std::string buffer;
  std::optional<nlohmann::json> reply;
  bool eof = false;

  while (!reply && !eof) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      child.kill_group();
      child.wait();
      std::ostringstream msg;
      msg << "timeout: sandbox exceeded " << plan_budget_s(request) + deadline_slack_s_
          << " s wall-clock deadline";
      return SandboxResponse{.fatal = FatalOutcome{"deadline", msg.str(), ""}};
    }
    pollfd fds[2];
    nfds_t n = 0;
    fds[n++] = {child_stdout_r.get(), POLLIN, 0};
    if (child_stdin_w.get() >= 0) fds[n++] = {child_stdin_w.get(), POLLOUT, 0};
    const int rc = ::poll(fds, n, static_cast<int>(std::min<long long>(remaining.count(), 1000)));
    if (rc < 0 && errno != EINTR) {
      child.kill_group();
      child.wait();
      throw Error(ErrorCode::backend_unavailable, std::string("poll: ") + std::strerror(errno));
    }
    if (n == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t w = ::write(child_stdin_w.get(), frame.data() + written, frame.size() - written);
      if (w > 0) written += static_cast<std::size_t>(w);
      if (w < 0 && errno != EAGAIN && errno != EINTR) written = frame.size();  // child closed stdin
      if (written >= frame.size()) child_stdin_w.reset();
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char chunk[65536];
      const ssize_t r = ::read(child_stdout_r.get(), chunk, sizeof chunk);
      if (r > 0) {
        buffer.append(chunk, static_cast<std::size_t>(r));
        try {
          reply = try_decode_frame(buffer);
        } catch (const Error& e) {
          child.kill_group();
          child.wait();
          throw Error(ErrorCode::backend_unavailable, e.what());
        }
      } else if (r == 0) {
        eof = true;
      }
    }
  }
  child_stdin_w.reset();
  child_stdout_r.reset();
  const int status = child.wait();

  if (!reply) {
    std::ostringstream msg;
    msg << "sandbox '" << command_ << "' exited without a response";
    if (WIFEXITED(status)) msg << " (exit " << WEXITSTATUS(status) << ")";
    if (WIFSIGNALED(status)) msg << " (signal " << WTERMSIG(status) << ")";
    throw Error(ErrorCode::backend_unavailable, msg.str());
  }
  SandboxResponse response;
  try {
    response = reply->get<SandboxResponse>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::backend_unavailable, std::string("bad sandbox response: ") + e.what());
  }
  if (response.fatal && response.fatal->phase == "protocol")
    throw Error(ErrorCode::backend_unavailable, "sandbox protocol error: " + response.fatal->message);
  if (response.protocol_version != kSandboxProtocolVersion)
    throw Error(ErrorCode::backend_unavailable,
                "sandbox speaks protocol " + response.protocol_version);
  return response;
}

void to_json(nlohmann::json& j, const BackendDescriptor& v) {
  j = {{"backend_id", v.backend_id},
       {"kind", v.kind == BackendDescriptor::Kind::simulated ? "simulated" : "external_sandbox"},
       {"endpoint_or_command", v.endpoint_or_command},
       {"capabilities", v.capabilities}};
}

void from_json(const nlohmann::json& j, BackendDescriptor& v) {
  v = BackendDescriptor{};
  j.at("backend_id").get_to(v.backend_id);
  const auto kind = j.value("kind", std::string("simulated"));
  if (kind == "simulated")
    v.kind = BackendDescriptor::Kind::simulated;
  else if (kind == "external_sandbox")
    v.kind = BackendDescriptor::Kind::external_sandbox;
  else
    throw Error(ErrorCode::parse_error, "unknown backend kind '" + kind + "'");
  v.endpoint_or_command = j.value("endpoint_or_command", std::string{});
  if (auto it = j.find("capabilities"); it != j.end()) it->get_to(v.capabilities);
}

std::shared_ptr<Backend> make_backend(const BackendDescriptor& descriptor) {
  if (descriptor.kind == BackendDescriptor::Kind::simulated)
    return std::make_shared<SimulatedBackend>();
  if (descriptor.endpoint_or_command.empty())
    throw Error(ErrorCode::invalid_argument,
                "external backend '" + descriptor.backend_id + "' needs a command");
  return std::make_shared<ProcessSandboxBackend>(descriptor.endpoint_or_command);
}

std::vector<BackendDescriptor> load_backend_registry(const std::string& path) {
  const auto j = read_json_file(path);
  if (!j.is_array()) throw Error(ErrorCode::parse_error, path + ": registry must be an array");
  return j.get<std::vector<BackendDescriptor>>();
}

}  // namespace kevolve
