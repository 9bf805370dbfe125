// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sptw/common.hpp"
#include "sptw/detector.hpp"
#include "sptw/transform.hpp"

namespace sptw {

enum class DiameterMethod { automatic, brute_force, coupled_beam };
std::string_view to_string(DiameterMethod method);
DiameterMethod parse_diameter_method(std::string_view name);

struct SearchConfig {
  std::size_t beam_size = 5;
  std::size_t iterations = 10;
  bool dedup = true;
  std::uint64_t seed = 0;
  bool track_global_best = true;
  /// Upper bound on |set|^k for exhaustive enumeration.
  std::uint64_t brute_force_cap = 10000;
  DiameterMethod diameter_method = DiameterMethod::automatic;

  void validate() const;
};

/// A program reached from the original by applying `sequence` in order
/// (first-applied first).
struct Candidate {
  std::string source;
  std::string source_hash;
  std::vector<std::string> sequence;
  double distance = 0.0;
  std::size_t iteration_found = 0;
  /// Apply + judge + score cost attributed to this candidate.
  std::int64_t wall_time_ms = 0;
};

struct IterationRecord {
  std::vector<Candidate> beam;
  std::size_t expanded_count = 0;
  /// Outputs that were transformed, valid and equivalent.
  std::size_t filtered_count = 0;
  /// Filtered outputs dropped because their hash was already seen.
  std::size_t duplicate_count = 0;
  double best_so_far = 0.0;
  std::int64_t wall_time_ms = 0;
};

struct SearchReport {
  std::string original_program_id;
  SearchConfig config;
  std::vector<IterationRecord> per_iteration;
  /// Global best when config.track_global_best, else final_beam_best.
  Candidate best;
  Candidate global_best;
  Candidate final_beam_best;
  bool terminated_early = false;
  bool valid = true;
  std::string error;
  std::size_t candidates_evaluated = 0;
  double mean_candidate_ms = 0.0;
};

/// Thrown when a detector or sandbox failure aborts a search; carries the
/// report up to the failure, flagged invalid.
class SearchAborted : public Error {
public:
  SearchAborted(const Error& cause, SearchReport partial)
      : Error(cause.code(), cause.what()), partial_(std::move(partial)) {}
  [[nodiscard]] const SearchReport& partial() const { return partial_; }

private:
  SearchReport partial_;
};

/// Beam search over compositions: expand every beam member with every
/// transformer, keep transformed + valid + equivalent outputs, then keep the
/// top beam_size by distance from the original (ties by source hash).
SearchReport compose_search(const ProgramCase& x, const TransformerSet& set,
                            const TransformRunner& runner, const Detector& detector,
                            const SearchConfig& config);

/// Exhaustive enumeration of every valid sequence of length 1..k_max. Returns
/// the most distant candidate, or the original (distance 0) when nothing
/// applies. Throws Error{cap_exceeded} when |set|^k_max > cap.
Candidate brute_force_search(const ProgramCase& x, const TransformerSet& set,
                             const TransformRunner& runner, const Detector& detector,
                             std::size_t k_max, std::uint64_t cap = 10000);

/// Programs reachable by exactly k valid applications, deduplicated by hash.
/// Branches stop at the first inapplicable or inequivalent application.
std::vector<Candidate> reachable_exactly(const ProgramCase& x, const TransformerSet& set,
                                         const TransformRunner& runner, std::size_t k);

struct DiameterEstimate {
  double diameter = 0.0;
  std::optional<Candidate> witness_u;
  std::optional<Candidate> witness_v;
  DiameterMethod method = DiameterMethod::brute_force;
};

/// Largest detector distance between two programs each reached by exactly k
/// applications. Exact enumeration when |set|^k <= cap (or forced), coupled
/// pair beam search otherwise.
DiameterEstimate estimate_diameter(const ProgramCase& x, const TransformerSet& set, std::size_t k,
                                   const TransformRunner& runner, const Detector& detector,
                                   const SearchConfig& config);

struct LeaveOneOut {
  std::string removed_transformer_id;
  double diameter = 0.0;
};

struct DiversityReport {
  std::string set_id;
  std::string program_id;
  std::size_t k = 0;
  double diameter = 0.0;
  std::vector<LeaveOneOut> leave_one_out;
  double diversity = 1.0;
  DiameterMethod method = DiameterMethod::brute_force;
};

/// Diameter over the mean leave-one-out diameter. When every diameter is 0
/// the ratio is taken as 1. Throws Error{domain} for sets with fewer than two
/// members and Error{degenerate} for a positive diameter over a zero mean.
DiversityReport diversity(const ProgramCase& x, const TransformerSet& set, std::size_t k,
                          const TransformRunner& runner, const Detector& detector,
                          const SearchConfig& config);

struct ChainTerm {
  std::size_t set_size = 0;
  double diameter = 0.0;
  double leave_one_out_mean = 0.0;
  std::optional<double> value;
};

struct BoundReport {
  std::string set_id;
  std::string program_id;
  std::size_t k = 0;
  DiameterMethod method = DiameterMethod::brute_force;
  /// Greedy chain: member added at each step and the diameter after adding.
  std::vector<std::pair<std::string, double>> greedy_sets;
  /// Diversity of every chain set with at least two members.
  std::vector<ChainTerm> chain_terms;
  /// Chain index (1-based set size) of the first factor in the product.
  std::size_t window_start = 0;
  /// Factors of the bound; bound_value is their product when all are defined.
  std::vector<std::optional<double>> per_step_diversity;
  std::optional<double> bound_value;
  double observed_strength = 0.0;
  std::optional<bool> holds;
  std::vector<std::string> flags;
};

/// Builds the greedy chain and reports the product-of-diversities bound next
/// to the strongest exactly-k transformation found by enumeration. Reports
/// both sides; never asserts the inequality.
BoundReport lemma_bound_report(const ProgramCase& x, const TransformerSet& set, std::size_t k,
                               const TransformRunner& runner, const Detector& detector,
                               const SearchConfig& config);

enum class TimingFields { include, omit };

nlohmann::json to_json(const SearchConfig& config);
nlohmann::json to_json(const Candidate& c, TimingFields timing = TimingFields::include);
nlohmann::json to_json(const SearchReport& r, TimingFields timing = TimingFields::include);
nlohmann::json to_json(const DiversityReport& r);
nlohmann::json to_json(const BoundReport& r);

}  // namespace sptw
