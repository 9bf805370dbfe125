// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace sptw {

class Sandbox;
struct ExecLimits;

struct UnitTest {
  std::string stdin_text;
  std::string expected_stdout;
  std::int64_t time_limit_ms = 2000;
};

struct Program {
  std::string program_id;
  std::string problem_id;
  std::string source_text;
  std::string source_hash;

  static Program make(std::string program_id, std::string problem_id, std::string source);
};

struct Problem {
  std::string problem_id;
  std::vector<UnitTest> tests;
  std::vector<Program> solutions;
};

enum class PairLabel { clone, nonclone };
enum class Split { train, validation, test };

std::string_view to_string(PairLabel label);
std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// Unordered pair stored canonically with a <= b.
struct CodePair {
  std::string a;
  std::string b;
  PairLabel label = PairLabel::clone;

  static CodePair canonical(std::string x, std::string y, PairLabel label);
  friend bool operator==(const CodePair&, const CodePair&) = default;
};

struct SplitCounts {
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
};

/// How a dataset was produced; serialized into the sidecar manifest.
struct DatasetProvenance {
  SplitCounts split_counts;
  std::size_t pairs_per_problem = 0;
  std::size_t problem_count = 0;
};

struct PairDataset {
  Split split = Split::train;
  std::vector<CodePair> pairs;
  std::uint64_t seed = 0;
  DatasetProvenance provenance;
  /// Programs introduced by augmentation, keyed by their new program_id.
  std::vector<Program> synthesized;

  [[nodiscard]] std::size_t clone_count() const;
  [[nodiscard]] std::size_t nonclone_count() const;
};

/// Reads a JSONL corpus (one problem per line). Throws Error{parse} with the
/// 1-based line number for malformed records, Error{invariant} for problems
/// without tests, and Error{conflict} for duplicate problem or program ids.
std::vector<Problem> load_corpus(const std::filesystem::path& path);
std::vector<Problem> parse_corpus(std::string_view text);

void write_corpus(const std::filesystem::path& path, std::span<const Problem> problems);
nlohmann::json problem_to_json(const Problem& problem);

struct FilterReport {
  std::size_t solutions_in = 0;
  std::size_t solutions_dropped = 0;
  std::size_t problems_dropped = 0;
  std::vector<std::string> dropped_problem_ids;
};

struct FilterResult {
  std::vector<Problem> problems;
  FilterReport report;
};

/// Keeps only solutions that pass every test of their problem and drops
/// problems left without solutions. Output is ordered by problem_id.
FilterResult filter_passing_solutions(std::span<const Problem> problems, const Sandbox& sandbox,
                                      const ExecLimits& limits, unsigned workers = 0);

struct ProblemSplits {
  std::vector<Problem> train;
  std::vector<Problem> validation;
  std::vector<Problem> test;
};

ProblemSplits split_problems(std::span<const Problem> problems, const SplitCounts& counts,
                             std::uint64_t seed);

PairDataset build_pairs(std::span<const Problem> problems, std::size_t pairs_per_problem,
                        std::uint64_t seed, Split split = Split::train);

/// Writes `{dir}/{split}.jsonl`, `{dir}/{split}.manifest.json` and, when the
/// dataset carries synthesized programs, `{dir}/{split}.programs.jsonl`.
void write_dataset(const std::filesystem::path& dir, const PairDataset& dataset,
                   const nlohmann::json& extra_manifest = nlohmann::json::object());
PairDataset read_dataset(const std::filesystem::path& dir, Split split);

std::string serialize_pairs(const PairDataset& dataset);

/// program_id -> Program over all solutions of the given problems.
std::map<std::string, Program> index_programs(std::span<const Problem> problems);

}  // namespace sptw
