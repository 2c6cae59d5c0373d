#pragma once

#include <atomic>
#include <cerrno>
#include <cmath>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "nasbot/arch_json.hpp"
#include "nasbot/errors.hpp"
#include "nasbot/hash.hpp"

namespace nasbot {

/// Failure of an external evaluator; `kind` tells the cases apart.
class ExternalError : public ComputeError {
public:
  enum class Kind { launch, exit_status, timeout, parse };
  ExternalError(Kind k, const std::string& what) : ComputeError(what), kind(k) {}
  Kind kind;
};

inline std::string_view external_error_name(ExternalError::Kind k) {
  switch (k) {
  case ExternalError::Kind::launch: return "launch-failure";
  case ExternalError::Kind::exit_status: return "external-failure";
  case ExternalError::Kind::timeout: return "timeout";
  case ExternalError::Kind::parse: return "parse-error";
  }
  return "?";
}

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

inline std::string substitute_arch(std::string cmd, const std::string& path) {
  const std::string key = "{arch}";
  const std::string quoted = shell_quote(path);
  for (std::size_t pos = cmd.find(key); pos != std::string::npos; pos = cmd.find(key, pos + quoted.size()))
    cmd.replace(pos, key.size(), quoted);
  return cmd;
}

inline std::string last_line(const std::string& out) {
  std::size_t end = out.find_last_not_of(" \t\r\n");
  if (end == std::string::npos) return "";
  std::size_t start = out.find_last_of('\n', end);
  start = start == std::string::npos ? 0 : start + 1;
  std::string line = out.substr(start, end - start + 1);
  line.erase(0, line.find_first_not_of(" \t\r"));
  return line;
}

/// Runs `cmd` under /bin/sh and returns its standard output. The whole
/// process group is killed when `timeout_s` (if positive) elapses.
inline std::string run_command(const std::string& cmd, double timeout_s) {
  int fds[2];
  if (pipe(fds) != 0) throw ExternalError(ExternalError::Kind::launch, std::string("pipe: ") + std::strerror(errno));
  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    throw ExternalError(ExternalError::Kind::launch, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    setpgid(0, 0);
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  close(fds[1]);
  std::string out;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  bool timed_out = false;
  char buf[4096];
  while (true) {
    int wait_ms = -1;
    if (timeout_s > 0) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        timed_out = true;
        break;
      }
      wait_ms = static_cast<int>(left.count());
    }
    pollfd p{fds[0], POLLIN, 0};
    const int r = poll(&p, 1, wait_ms);
    if (r < 0 && errno == EINTR) continue;
    if (r == 0) continue;
    const ssize_t got = read(fds[0], buf, sizeof buf);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) break;
    out.append(buf, static_cast<std::size_t>(got));
  }
  close(fds[0]);
  if (timed_out) kill(-pid, SIGKILL);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out)
    throw ExternalError(ExternalError::Kind::timeout, "evaluator timed out after " + std::to_string(timeout_s) + " s");
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    throw ExternalError(ExternalError::Kind::exit_status, "evaluator exited with status " + std::to_string(code));
  }
  return out;
}

} // namespace detail

/// Writes the architecture to a temporary JSON file, runs `command` with
/// `{arch}` replaced by that path, and parses the last line of standard
/// output as the (to be maximised) value.
inline double external_evaluate(const std::string& command, const Architecture& arch, double timeout_s) {
  namespace fs = std::filesystem;
  static std::atomic<unsigned> counter{0};
  const fs::path path = fs::temp_directory_path() /
                        ("nasbot-" + std::to_string(getpid()) + "-" + std::to_string(counter++) + "-" +
                         structural_hash(arch) + ".json");
  {
    std::ofstream f(path);
    if (!f) throw ExternalError(ExternalError::Kind::launch, "cannot write " + path.string());
    f << to_json(arch) << "\n";
  }
  std::string out;
  try {
    out = detail::run_command(detail::substitute_arch(command, path.string()), timeout_s);
  } catch (...) {
    std::error_code ec;
    fs::remove(path, ec);
    throw;
  }
  std::error_code ec;
  fs::remove(path, ec);
  const std::string line = detail::last_line(out);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(line.c_str(), &end);
  if (line.empty() || end != line.c_str() + line.size() || errno == ERANGE || !std::isfinite(v))
    throw ExternalError(ExternalError::Kind::parse, "cannot parse evaluator output \"" + line + "\"");
  return v;
}

} // namespace nasbot
