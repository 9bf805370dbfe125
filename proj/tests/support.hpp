// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sptw/corpus.hpp"
#include "sptw/sandbox.hpp"
#include "sptw/transform.hpp"

namespace sptw::testing {

std::filesystem::path fixture(std::string_view name);
std::filesystem::path golden(std::string_view name);
std::string toy_path();
std::string cli_path();

/// python3 -S for both the interpreter and the validity check.
SandboxConfig fast_sandbox();

/// A transformer running `spt-toy args...`.
Transformer toy(std::string id, std::vector<std::string> args);

/// Writes manifest-only registry entries for the given toys under `root`.
void write_toy_registry(const std::filesystem::path& root, const std::vector<Transformer>& toys);

std::vector<ProgramCase> fixture_cases(std::string_view corpus_name);
ProgramCase fixture_case(std::string_view corpus_name, std::string_view program_id);

/// Token-set Jaccard written separately from the library's detector.
double oracle_similarity(const std::string& a, const std::string& b);
double oracle_distance(const std::string& a, const std::string& b);

std::string read_file(const std::filesystem::path& path);

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

/// Runs a shell command line, capturing stdout and stderr together.
CommandResult run_command(const std::string& command_line);

}  // namespace sptw::testing
