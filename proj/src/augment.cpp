// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <set>

#include "sptw/common.hpp"
#include "sptw/transform.hpp"

namespace sptw {

AugmentResult augment_dataset(const PairDataset& dataset, const TransformerSet& set, double p,
                              std::uint64_t seed,
                              const std::map<std::string, ProgramCase>& catalog,
                              const TransformRunner& runner) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::domain, "augmentation probability must be in [0, 1]");
  set.validate();

  struct Attempt {
    std::size_t pair;
    std::size_t member;
    bool second_side;
  };
  // Every pair consumes the same three draws so streams stay aligned
  // regardless of p.
  std::mt19937_64 rng(derive_seed(seed, "augment"));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_member(0, set.members.size() - 1);
  std::uniform_int_distribution<int> pick_side(0, 1);
  std::vector<Attempt> attempts;
  for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
    const double u = coin(rng);
    const std::size_t member = pick_member(rng);
    const bool second = pick_side(rng) == 1;
    if (u < p) attempts.push_back({i, member, second});
  }

  const auto lookup = [&](const std::string& id) -> const ProgramCase& {
    const auto it = catalog.find(id);
    if (it == catalog.end()) throw Error(ErrorCode::domain, "augment: unknown program " + id);
    return it->second;
  };

  std::vector<std::optional<std::string>> outputs(attempts.size());
  parallel_for(attempts.size(), runner.workers(), [&](std::size_t k) {
    const Attempt& a = attempts[k];
    const CodePair& pair = dataset.pairs[a.pair];
    const ProgramCase& side = lookup(a.second_side ? pair.b : pair.a);
    const ApplyOutcome outcome = runner.apply(set.members[a.member], side.program.source_text);
    if (outcome.status != ApplyStatus::transformed) return;
    if (!runner.equivalent(*outcome.output_source, side.tests)) return;
    outputs[k] = outcome.output_source;
  });

  AugmentResult result;
  result.dataset = dataset;
  result.attempts = attempts.size();
  std::set<std::string> synthesized_ids;
  for (const Program& existing : dataset.synthesized) synthesized_ids.insert(existing.program_id);
  for (std::size_t k = 0; k < attempts.size(); ++k) {
    if (!outputs[k]) continue;
    const Attempt& a = attempts[k];
    CodePair& pair = result.dataset.pairs[a.pair];
    const ProgramCase& side = lookup(a.second_side ? pair.b : pair.a);
    const Transformer& t = set.members[a.member];
    Program augmented =
        Program::make(side.program.program_id + "~" + t.transformer_id + "~" +
                          sha256_hex(*outputs[k]).substr(0, 8),
                      side.program.problem_id, *outputs[k]);
    const std::string new_id = augmented.program_id;
    if (synthesized_ids.insert(new_id).second) {
      result.dataset.synthesized.push_back(std::move(augmented));
    }
    std::string other = a.second_side ? pair.a : pair.b;
    pair = CodePair::canonical(new_id, std::move(other), pair.label);
    ++result.replaced;
    ++result.replacements_by_transformer[t.transformer_id];
  }
  return result;
}

}  // namespace sptw
