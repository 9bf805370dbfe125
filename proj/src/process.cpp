// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "sptw/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>

#include "sptw/common.hpp"

extern char** environ;

namespace sptw {
namespace {

using Clock = std::chrono::steady_clock;

class ProcessGate {
public:
  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return active_ < capacity_locked(); });
    ++active_;
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      --active_;
    }
    cv_.notify_one();
  }
  void set_capacity(unsigned n) {
    {
      std::lock_guard lock(mutex_);
      capacity_ = n;
    }
    cv_.notify_all();
  }
  unsigned capacity() {
    std::lock_guard lock(mutex_);
    return capacity_locked();
  }

private:
  unsigned capacity_locked() const { return capacity_ == 0 ? default_worker_count() : capacity_; }

  std::mutex mutex_;
  std::condition_variable cv_;
  unsigned capacity_ = 0;
  unsigned active_ = 0;
};

ProcessGate& gate() {
  static ProcessGate instance;
  return instance;
}

struct GateSlot {
  GateSlot() { gate().acquire(); }
  ~GateSlot() { gate().release(); }
  GateSlot(const GateSlot&) = delete;
  GateSlot& operator=(const GateSlot&) = delete;
};

struct Fd {
  int fd = -1;
  Fd() = default;
  explicit Fd(int f) : fd(f) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }
  void reset() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
};

void make_pipe(Fd& read_end, Fd& write_end) {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::environment, std::string("pipe2 failed: ") + std::strerror(errno));
  }
  read_end.fd = fds[0];
  write_end.fd = fds[1];
}

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

std::vector<std::string> build_environment(
    const std::vector<std::pair<std::string, std::string>>& extra) {
  std::vector<std::string> env;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    std::string_view entry(*e);
    bool overridden = false;
    for (const auto& [key, value] : extra) {
      if (entry.size() > key.size() && entry.substr(0, key.size()) == key &&
          entry[key.size()] == '=') {
        overridden = true;
        break;
      }
    }
    if (!overridden) env.emplace_back(entry);
  }
  for (const auto& [key, value] : extra) env.push_back(key + "=" + value);
  return env;
}

std::vector<char*> as_cstrings(std::vector<std::string>& strings) {
  std::vector<char*> out;
  out.reserve(strings.size() + 1);
  for (auto& s : strings) out.push_back(s.data());
  out.push_back(nullptr);
  return out;
}

std::int64_t elapsed_ms(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

}  // namespace

std::string_view to_string(ExecStatus status) {
  switch (status) {
    case ExecStatus::ok: return "ok";
    case ExecStatus::nonzero_exit: return "nonzero_exit";
    case ExecStatus::timeout: return "timeout";
    case ExecStatus::output_truncated: return "output_truncated";
    case ExecStatus::spawn_failure: return "spawn_failure";
  }
  return "unknown";
}

void set_max_concurrent_processes(unsigned n) { gate().set_capacity(n); }
unsigned max_concurrent_processes() { return gate().capacity(); }

std::optional<std::filesystem::path> resolve_executable(const std::string& name) {
  namespace fs = std::filesystem;
  if (name.empty()) return std::nullopt;
  auto executable = [](const fs::path& p) {
    std::error_code ec;
    return fs::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
  };
  if (name.find('/') != std::string::npos) {
    if (executable(name)) return fs::path(name);
    return std::nullopt;
  }
  const char* path_env = std::getenv("PATH");
  const std::string path_list = path_env != nullptr ? path_env : "/usr/local/bin:/usr/bin:/bin";
  std::size_t start = 0;
  while (start <= path_list.size()) {
    std::size_t colon = path_list.find(':', start);
    if (colon == std::string::npos) colon = path_list.size();
    std::string dir = path_list.substr(start, colon - start);
    if (dir.empty()) dir = ".";
    fs::path candidate = fs::path(dir) / name;
    if (executable(candidate)) return candidate;
    start = colon + 1;
  }
  return std::nullopt;
}

ProcessResult run_process(const ProcessSpec& spec) {
  ignore_sigpipe();
  ProcessResult result;
  if (spec.argv.empty()) {
    result.diagnostic = "empty argv";
    return result;
  }
  const auto exe = resolve_executable(spec.argv.front());
  if (!exe) {
    result.diagnostic = "executable not found: " + spec.argv.front();
    return result;
  }

  std::vector<std::string> argv_storage = spec.argv;
  std::vector<std::string> env_storage = build_environment(spec.extra_env);
  std::vector<char*> argv = as_cstrings(argv_storage);
  std::vector<char*> envp = as_cstrings(env_storage);
  const std::string exe_path = exe->string();
  const std::string work_dir = spec.working_dir.string();

  GateSlot slot;
  Fd in_r, in_w, out_r, out_w, err_r, err_w, status_r, status_w;
  make_pipe(in_r, in_w);
  make_pipe(out_r, out_w);
  make_pipe(err_r, err_w);
  make_pipe(status_r, status_w);

  const auto start = Clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    result.diagnostic = std::string("fork failed: ") + std::strerror(errno);
    return result;
  }
  if (pid == 0) {
    // Child: async-signal-safe calls only.
    ::setpgid(0, 0);
    if (!work_dir.empty() && ::chdir(work_dir.c_str()) != 0) {
      const int e = errno;
      [[maybe_unused]] auto n = ::write(status_w.fd, &e, sizeof e);
      ::_exit(127);
    }
    struct rlimit mem{static_cast<rlim_t>(spec.memory_bytes), static_cast<rlim_t>(spec.memory_bytes)};
    ::setrlimit(RLIMIT_AS, &mem);
    struct rlimit core{0, 0};
    ::setrlimit(RLIMIT_CORE, &core);
    ::dup2(in_r.fd, 0);
    ::dup2(out_w.fd, 1);
    ::dup2(err_w.fd, 2);
    ::execve(exe_path.c_str(), argv.data(), envp.data());
    const int e = errno;
    [[maybe_unused]] auto n = ::write(status_w.fd, &e, sizeof e);
    ::_exit(127);
  }

  ::setpgid(pid, pid);
  in_r.reset();
  out_w.reset();
  err_w.reset();
  status_w.reset();

  int child_errno = 0;
  ssize_t got = 0;
  do {
    got = ::read(status_r.fd, &child_errno, sizeof child_errno);
  } while (got < 0 && errno == EINTR);
  if (got == static_cast<ssize_t>(sizeof child_errno)) {
    int st = 0;
    ::waitpid(pid, &st, 0);
    result.diagnostic = "exec failed for " + exe_path + ": " + std::strerror(child_errno);
    result.wall_time_ms = elapsed_ms(start);
    return result;
  }

  set_nonblocking(in_w.fd);
  set_nonblocking(out_r.fd);
  set_nonblocking(err_r.fd);

  std::size_t written = 0;
  if (spec.stdin_data.empty()) in_w.reset();
  bool timed_out = false;
  bool truncated = false;
  const auto deadline = start + std::chrono::milliseconds(spec.wall_time_ms);
  const auto limit = static_cast<std::size_t>(spec.max_output_bytes);
  char buffer[65536];

  while (out_r.fd >= 0 || err_r.fd >= 0) {
    const auto now = Clock::now();
    if (now >= deadline) {
      timed_out = true;
      break;
    }
    std::vector<pollfd> fds;
    if (in_w.fd >= 0) fds.push_back({in_w.fd, POLLOUT, 0});
    if (out_r.fd >= 0) fds.push_back({out_r.fd, POLLIN, 0});
    if (err_r.fd >= 0) fds.push_back({err_r.fd, POLLIN, 0});
    const auto wait_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    const int ready = ::poll(fds.data(), fds.size(), static_cast<int>(wait_ms));
    if (ready < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (const pollfd& p : fds) {
      if (p.revents == 0) continue;
      if (p.fd == in_w.fd) {
        const ssize_t n = ::write(in_w.fd, spec.stdin_data.data() + written,
                                  spec.stdin_data.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if (n < 0 && errno != EAGAIN && errno != EINTR) in_w.reset();
        if (written >= spec.stdin_data.size()) in_w.reset();
        continue;
      }
      const bool is_out = p.fd == out_r.fd;
      Fd& fd = is_out ? out_r : err_r;
      std::string& sink = is_out ? result.stdout_data : result.stderr_data;
      const ssize_t n = ::read(fd.fd, buffer, sizeof buffer);
      if (n > 0) {
        sink.append(buffer, static_cast<std::size_t>(n));
        if (sink.size() > limit) {
          sink.resize(limit);
          if (is_out) truncated = true;
        }
      } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
        fd.reset();
      }
    }
    if (truncated) break;
  }

  int st = 0;
  if (timed_out || truncated) {
    ::kill(-pid, SIGKILL);
    ::waitpid(pid, &st, 0);
  } else {
    // Pipes are closed; the child may still be running without them.
    for (;;) {
      const pid_t w = ::waitpid(pid, &st, WNOHANG);
      if (w == pid) break;
      if (Clock::now() >= deadline) {
        timed_out = true;
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &st, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    ::kill(-pid, SIGKILL);
  }
  result.wall_time_ms = elapsed_ms(start);

  if (WIFEXITED(st)) {
    result.exit_code = WEXITSTATUS(st);
  } else if (WIFSIGNALED(st)) {
    result.exit_code = 128 + WTERMSIG(st);
  }
  if (timed_out) {
    result.status = ExecStatus::timeout;
  } else if (truncated) {
    result.status = ExecStatus::output_truncated;
  } else if (WIFEXITED(st) && result.exit_code == 0) {
    result.status = ExecStatus::ok;
  } else {
    result.status = ExecStatus::nonzero_exit;
  }
  return result;
}

ScratchDir::ScratchDir() {
  std::string templ = (std::filesystem::temp_directory_path() / "sptw-XXXXXX").string();
  if (::mkdtemp(templ.data()) == nullptr) {
    throw Error(ErrorCode::environment,
                std::string("cannot create scratch directory: ") + std::strerror(errno));
  }
  path_ = templ;
}

ScratchDir::~ScratchDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace sptw
