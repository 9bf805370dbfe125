// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sptw/corpus.hpp"
#include "sptw/process.hpp"

namespace sptw {

struct ExecLimits {
  std::int64_t wall_time_ms = 2000;
  std::int64_t memory_bytes = 256LL << 20;
  std::int64_t max_output_bytes = 8LL << 20;

  void validate() const;
};

struct ExecResult {
  ExecStatus status = ExecStatus::spawn_failure;
  std::string stdout_text;
  std::string stderr_text;
  std::int64_t wall_time_ms = 0;
  int exit_code = -1;
  std::string diagnostic;
};

enum class TestOutcome { match, mismatch, runtime_error, timeout };
std::string_view to_string(TestOutcome outcome);

struct TestVerdict {
  std::size_t test_index = 0;
  TestOutcome outcome = TestOutcome::mismatch;
};

/// Result of the execution-based equivalence oracle: `equivalent` holds iff
/// every recorded per-test outcome is a match.
struct EquivalenceVerdict {
  bool equivalent = false;
  std::vector<TestVerdict> per_test;
};

struct SandboxConfig {
  /// argv template for running a subject program; `{file}` is the program path.
  std::vector<std::string> interpreter_cmd{"python3", "{file}"};
  /// argv template for a parse-only check; exit 0 means valid.
  std::vector<std::string> validity_cmd{
      "python3", "-c", "import sys; compile(open(sys.argv[1]).read(), sys.argv[1], 'exec')",
      "{file}"};
  std::string source_suffix = ".py";
  ExecLimits limits;
  unsigned max_parallel = 0;
};

/// Judge-style normalization: trailing whitespace stripped from every line,
/// trailing empty lines dropped. Lines are split on '\n' only.
std::string normalize_output(std::string_view text);

class Sandbox {
public:
  explicit Sandbox(SandboxConfig config);

  [[nodiscard]] const SandboxConfig& config() const { return config_; }

  ExecResult run_subject(std::string_view source, std::string_view stdin_text,
                         const ExecLimits& limits) const;

  /// Throws Error{environment} when the validity command cannot be spawned.
  bool check_valid(std::string_view source) const;

  /// Runs the candidate on each test in order. With `short_circuit` the run
  /// stops at the first non-match, so per_test may be shorter than tests.
  /// Each test runs under min(limits.wall_time_ms, test.time_limit_ms).
  EquivalenceVerdict check_equivalent(std::string_view source, std::span<const UnitTest> tests,
                                      const ExecLimits& limits, bool short_circuit = true) const;

private:
  SandboxConfig config_;
};

}  // namespace sptw
