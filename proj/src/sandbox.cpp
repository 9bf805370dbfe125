// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "sptw/sandbox.hpp"

#include <algorithm>
#include <fstream>

#include "sptw/common.hpp"

namespace sptw {
namespace {

std::filesystem::path write_source(const ScratchDir& dir, std::string_view source,
                                   const std::string& suffix) {
  const auto path = dir.path() / ("main" + suffix);
  std::ofstream out(path, std::ios::binary);
  out.write(source.data(), static_cast<std::streamsize>(source.size()));
  if (!out) throw Error(ErrorCode::environment, "cannot write program file " + path.string());
  return path;
}

}  // namespace

void ExecLimits::validate() const {
  if (wall_time_ms <= 0 || memory_bytes <= 0 || max_output_bytes <= 0) {
    throw Error(ErrorCode::config, "execution limits must be positive");
  }
}

std::string_view to_string(TestOutcome outcome) {
  switch (outcome) {
    case TestOutcome::match: return "match";
    case TestOutcome::mismatch: return "mismatch";
    case TestOutcome::runtime_error: return "runtime_error";
    case TestOutcome::timeout: return "timeout";
  }
  return "unknown";
}

std::string normalize_output(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  for (;;) {
    const std::size_t nl = text.find('\n', start);
    std::string_view line =
        text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    const std::size_t last = line.find_last_not_of(" \t\r\f\v");
    lines.push_back(last == std::string_view::npos ? std::string_view{} : line.substr(0, last + 1));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out.append(lines[i]);
  }
  return out;
}

Sandbox::Sandbox(SandboxConfig config) : config_(std::move(config)) {
  if (config_.interpreter_cmd.empty()) {
    throw Error(ErrorCode::config, "sandbox.interpreter_cmd must not be empty");
  }
  if (config_.validity_cmd.empty()) {
    throw Error(ErrorCode::config, "sandbox.validity_cmd must not be empty");
  }
  config_.limits.validate();
}

ExecResult Sandbox::run_subject(std::string_view source, std::string_view stdin_text,
                                const ExecLimits& limits) const {
  limits.validate();
  ScratchDir dir;
  const auto file = write_source(dir, source, config_.source_suffix);
  ProcessSpec spec;
  spec.argv = substitute_argv(config_.interpreter_cmd, "{file}", file.string());
  spec.stdin_data = std::string(stdin_text);
  spec.working_dir = dir.path();
  spec.wall_time_ms = limits.wall_time_ms;
  spec.memory_bytes = limits.memory_bytes;
  spec.max_output_bytes = limits.max_output_bytes;
  ProcessResult pr = run_process(spec);

  ExecResult result;
  result.status = pr.status;
  result.stdout_text = std::move(pr.stdout_data);
  result.stderr_text = std::move(pr.stderr_data);
  result.wall_time_ms = pr.wall_time_ms;
  result.exit_code = pr.exit_code;
  result.diagnostic = std::move(pr.diagnostic);
  return result;
}

bool Sandbox::check_valid(std::string_view source) const {
  ScratchDir dir;
  const auto file = write_source(dir, source, config_.source_suffix);
  ProcessSpec spec;
  spec.argv = substitute_argv(config_.validity_cmd, "{file}", file.string());
  spec.working_dir = dir.path();
  spec.wall_time_ms = config_.limits.wall_time_ms;
  spec.memory_bytes = config_.limits.memory_bytes;
  spec.max_output_bytes = config_.limits.max_output_bytes;
  const ProcessResult pr = run_process(spec);
  if (pr.status == ExecStatus::spawn_failure) {
    throw Error(ErrorCode::environment, "validity command unavailable: " + pr.diagnostic);
  }
  return pr.status == ExecStatus::ok;
}

EquivalenceVerdict Sandbox::check_equivalent(std::string_view source,
                                             std::span<const UnitTest> tests,
                                             const ExecLimits& limits, bool short_circuit) const {
  if (tests.empty()) throw Error(ErrorCode::domain, "check_equivalent requires at least one test");
  EquivalenceVerdict verdict;
  verdict.equivalent = true;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const UnitTest& test = tests[i];
    ExecLimits per_test = limits;
    if (test.time_limit_ms > 0) {
      per_test.wall_time_ms = std::min(limits.wall_time_ms, test.time_limit_ms);
    }
    const ExecResult run = run_subject(source, test.stdin_text, per_test);
    if (run.status == ExecStatus::spawn_failure) {
      throw Error(ErrorCode::environment, "sandbox unavailable: " + run.diagnostic);
    }
    TestOutcome outcome = TestOutcome::match;
    switch (run.status) {
      case ExecStatus::timeout: outcome = TestOutcome::timeout; break;
      case ExecStatus::nonzero_exit: outcome = TestOutcome::runtime_error; break;
      case ExecStatus::output_truncated: outcome = TestOutcome::mismatch; break;
      default:
        outcome = normalize_output(run.stdout_text) == normalize_output(test.expected_stdout)
                      ? TestOutcome::match
                      : TestOutcome::mismatch;
    }
    verdict.per_test.push_back({i, outcome});
    if (outcome != TestOutcome::match) {
      verdict.equivalent = false;
      if (short_circuit) break;
    }
  }
  return verdict;
}

}  // namespace sptw
