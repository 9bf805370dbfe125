// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sptw {

enum class ExecStatus { ok, nonzero_exit, timeout, output_truncated, spawn_failure };

std::string_view to_string(ExecStatus status);

struct ProcessSpec {
  std::vector<std::string> argv;
  std::string stdin_data;
  std::filesystem::path working_dir;
  std::vector<std::pair<std::string, std::string>> extra_env;
  std::int64_t wall_time_ms = 2000;
  std::int64_t memory_bytes = 256LL << 20;
  std::int64_t max_output_bytes = 8LL << 20;
};

struct ProcessResult {
  ExecStatus status = ExecStatus::spawn_failure;
  int exit_code = -1;
  std::string stdout_data;
  std::string stderr_data;
  std::int64_t wall_time_ms = 0;
  std::string diagnostic;
};

/// Spawns argv in its own process group with an address-space limit, feeds
/// stdin, and captures stdout/stderr. On timeout or output overflow the whole
/// process group is killed. Never throws for child-side failures.
ProcessResult run_process(const ProcessSpec& spec);

/// Resolves a command name through PATH (names containing '/' are checked
/// directly). Returns nullopt when nothing executable is found.
std::optional<std::filesystem::path> resolve_executable(const std::string& name);

/// Caps the number of subject/transformer processes alive at once across all
/// threads. Zero means the logical CPU count.
void set_max_concurrent_processes(unsigned n);
unsigned max_concurrent_processes();

/// A uniquely named directory under the system temp dir, removed on
/// destruction.
class ScratchDir {
public:
  ScratchDir();
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

}  // namespace sptw
