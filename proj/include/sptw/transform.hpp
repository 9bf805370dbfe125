// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "sptw/corpus.hpp"
#include "sptw/detector.hpp"
#include "sptw/sandbox.hpp"

namespace sptw {

enum class ProvenanceKind { manual, forged };

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::manual;
  std::string model_id;
  std::string design_id;
  double temperature = 0.0;
  int candidate_index = 0;
};

/// An executable semantics-preserving transformation. The executable reads a
/// program on stdin and writes the transformed program to stdout.
struct Transformer {
  std::string transformer_id;
  std::string name;
  std::string description;
  /// argv template; `{dir}` expands to the transformer's directory.
  std::vector<std::string> entry;
  Provenance provenance;
  std::filesystem::path directory;

  [[nodiscard]] std::vector<std::string> resolved_entry() const;
};

nlohmann::json manifest_json(const Transformer& t);
Transformer transformer_from_manifest(const nlohmann::json& manifest,
                                      const std::filesystem::path& directory);

/// Throws Error{registry} unless the entry's program and every `{dir}` file
/// argument exist.
void check_entry(const Transformer& t);

struct TransformerSet {
  std::string set_id;
  std::vector<Transformer> members;

  /// Non-empty, no duplicate transformer_id.
  void validate() const;
  [[nodiscard]] TransformerSet without(std::size_t index) const;
};

/// A directory of transformers, one subdirectory each holding manifest.json
/// and its artifacts. Writers serialize through `{root}/.lock`.
class Registry {
public:
  explicit Registry(std::filesystem::path root);

  [[nodiscard]] const std::filesystem::path& root() const { return root_; }
  [[nodiscard]] std::vector<Transformer> list() const;
  [[nodiscard]] Transformer get(std::string_view transformer_id) const;
  [[nodiscard]] TransformerSet make_set(std::string set_id,
                                        const std::vector<std::string>& ids) const;

  /// Creates `{root}/{id}/`, writes `files` (name -> contents) and the
  /// manifest, then validates the entry. Throws Error{conflict} if the id is
  /// already registered.
  Transformer add(Transformer t, const std::map<std::string, std::string>& files);

private:
  std::filesystem::path root_;
};

enum class ApplyStatus { transformed, identity, invalid_output, crashed, timeout };
std::string_view to_string(ApplyStatus status);

struct ApplyOutcome {
  ApplyStatus status = ApplyStatus::crashed;
  std::optional<std::string> output_source;
  std::int64_t wall_time_ms = 0;
  std::string diagnostic;
};

struct ApplyOptions {
  std::int64_t time_limit_ms = 10000;
  std::int64_t memory_bytes = 1LL << 30;
  std::int64_t max_output_bytes = 8LL << 20;
  /// When set, each process gets SPT_SEED derived from this seed, the
  /// transformer id and the input digest.
  std::optional<std::uint64_t> seed;
  /// Reuse outcomes for repeated (transformer, input) and (program, tests)
  /// queries within this runner's lifetime.
  bool memoize = true;
  /// Limits for the equivalence oracle.
  ExecLimits judge_limits;
  unsigned workers = 0;
};

/// A program together with the tests of its problem.
struct ProgramCase {
  Program program;
  std::vector<UnitTest> tests;
};

std::vector<ProgramCase> make_cases(std::span<const Problem> problems);

/// Applies transformers and judges outputs. Thread-safe.
class TransformRunner {
public:
  TransformRunner(const Sandbox& sandbox, ApplyOptions options);

  [[nodiscard]] const Sandbox& sandbox() const { return sandbox_; }
  [[nodiscard]] const ApplyOptions& options() const { return options_; }
  [[nodiscard]] unsigned workers() const;

  ApplyOutcome apply(const Transformer& t, const std::string& source) const;
  bool equivalent(const std::string& source, std::span<const UnitTest> tests) const;

  /// Number of transformer processes actually spawned (memo hits excluded).
  [[nodiscard]] std::size_t spawned_applications() const;

private:
  ApplyOutcome apply_uncached(const Transformer& t, const std::string& source) const;

  const Sandbox& sandbox_;
  ApplyOptions options_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, ApplyOutcome> apply_memo_;
  mutable std::unordered_map<std::string, bool> judge_memo_;
  mutable std::size_t spawned_ = 0;
};

struct ProgramEvaluation {
  std::string program_id;
  bool applied = false;
  bool equivalent = false;
  double distance = 0.0;
  ApplyStatus status = ApplyStatus::crashed;
};

struct TransformerEvaluation {
  std::string transformer_id;
  std::size_t n = 0;
  std::size_t correct_and_applicable = 0;
  /// Mean of A * L over the programs; 0 when evaluated without a detector.
  double mean_reward = 0.0;
  std::vector<ProgramEvaluation> per_program;
};

nlohmann::json to_json(const TransformerEvaluation& e);

/// Applies t to every program and judges transformed outputs. Distances are
/// computed for transformed outputs when a detector is given. per_program is
/// ordered by program_id.
TransformerEvaluation evaluate_transformer(const TransformRunner& runner, const Transformer& t,
                                           std::span<const ProgramCase> cases,
                                           const Detector* detector = nullptr);

/// Mean over the validation programs of A(x, T(x)) * L(x, T(x)), where A is 1
/// only for outputs that are transformed and pass every test.
double reward(const TransformRunner& runner, const Transformer& t,
              std::span<const ProgramCase> validation, const Detector& detector);

struct BestOfN {
  std::size_t winner_index = 0;
  std::vector<TransformerEvaluation> table;
};

/// Argmax of reward; ties go to the lowest candidate index.
BestOfN best_of_n(const TransformRunner& runner, std::span<const Transformer> candidates,
                  std::span<const ProgramCase> validation, const Detector& detector);

struct ProgramApplicability {
  std::string program_id;
  std::size_t applicable_count = 0;
};

/// For each program, the number of set members whose output is transformed
/// and equivalent. Duplicate members count separately.
std::vector<ProgramApplicability> per_program_applicability(const TransformRunner& runner,
                                                            const TransformerSet& set,
                                                            std::span<const ProgramCase> cases);

struct AugmentResult {
  PairDataset dataset;
  std::size_t attempts = 0;
  std::size_t replaced = 0;
  std::map<std::string, std::size_t> replacements_by_transformer;
};

/// Per pair, with probability p, picks one member and one side uniformly and
/// replaces that side with the transformed program when the output is
/// transformed and passes the side's problem tests. Labels never change.
/// `catalog` maps program_id to the program and its tests.
AugmentResult augment_dataset(const PairDataset& dataset, const TransformerSet& set, double p,
                              std::uint64_t seed,
                              const std::map<std::string, ProgramCase>& catalog,
                              const TransformRunner& runner);

std::map<std::string, ProgramCase> make_catalog(std::span<const Problem> problems);

}  // namespace sptw
