// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "sptw/search.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <unordered_set>

namespace sptw {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::int64_t ms_since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

/// |base|^exp, saturating at UINT64_MAX.
std::uint64_t saturating_pow(std::uint64_t base, std::size_t exp) {
  std::uint64_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (base != 0 && out > UINT64_MAX / base) return UINT64_MAX;
    out *= base;
  }
  return out;
}

Candidate original_candidate(const ProgramCase& x) {
  Candidate c;
  c.source = x.program.source_text;
  c.source_hash = x.program.source_hash.empty() ? sha256_hex(c.source) : x.program.source_hash;
  return c;
}

/// Applies every member to every parent; returns, per (parent, member) in
/// row-major order, the child if it is transformed, valid and equivalent.
struct Child {
  std::optional<Candidate> candidate;
  std::int64_t wall_time_ms = 0;
};

std::vector<Child> expand(const std::vector<const Candidate*>& parents, const TransformerSet& set,
                          const ProgramCase& x, const TransformRunner& runner,
                          std::size_t iteration) {
  const std::size_t m = set.members.size();
  std::vector<Child> children(parents.size() * m);
  parallel_for(children.size(), runner.workers(), [&](std::size_t k) {
    const Candidate& parent = *parents[k / m];
    const Transformer& t = set.members[k % m];
    const auto start = Clock::now();
    const ApplyOutcome outcome = runner.apply(t, parent.source);
    if (outcome.status == ApplyStatus::transformed &&
        runner.equivalent(*outcome.output_source, x.tests)) {
      Candidate c;
      c.source = *outcome.output_source;
      c.source_hash = sha256_hex(c.source);
      c.sequence = parent.sequence;
      c.sequence.push_back(t.transformer_id);
      c.iteration_found = iteration;
      children[k].candidate = std::move(c);
    }
    children[k].wall_time_ms = ms_since(start);
  });
  return children;
}

void score_against(const std::string& reference, std::vector<Candidate>& pool,
                   const Detector& detector) {
  if (pool.empty()) return;
  std::vector<SourcePair> pairs;
  pairs.reserve(pool.size());
  for (const Candidate& c : pool) pairs.push_back({reference, c.source});
  const auto scores = detector.score_batch(pairs);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i].distance = scores[i].l;
}

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.distance != b.distance) return a.distance > b.distance;
  return a.source_hash < b.source_hash;
}

DiameterMethod resolve_method(const SearchConfig& config, std::size_t set_size, std::size_t k) {
  if (config.diameter_method != DiameterMethod::automatic) return config.diameter_method;
  return saturating_pow(set_size, k) <= config.brute_force_cap ? DiameterMethod::brute_force
                                                                : DiameterMethod::coupled_beam;
}

DiameterEstimate exact_diameter(const ProgramCase& x, const TransformerSet& set, std::size_t k,
                                const TransformRunner& runner, const Detector& detector) {
  DiameterEstimate est;
  est.method = DiameterMethod::brute_force;
  const std::vector<Candidate> outs = reachable_exactly(x, set, runner, k);
  if (outs.empty()) return est;
  est.witness_u = outs.front();
  est.witness_v = outs.front();
  if (outs.size() == 1) return est;

  const bool symmetric = detector.handle().kind == DetectorKind::lexical;
  std::vector<SourcePair> pairs;
  std::vector<std::pair<std::size_t, std::size_t>> index;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    for (std::size_t j = 0; j < outs.size(); ++j) {
      if (i == j || (symmetric && j < i)) continue;
      pairs.push_back({outs[i].source, outs[j].source});
      index.emplace_back(i, j);
    }
  }
  const auto scores = detector.score_batch(pairs);
  std::size_t best = 0;
  for (std::size_t p = 1; p < scores.size(); ++p) {
    if (scores[p].l > scores[best].l) best = p;
  }
  est.diameter = scores[best].l;
  est.witness_u = outs[index[best].first];
  est.witness_v = outs[index[best].second];
  return est;
}

DiameterEstimate coupled_beam_diameter(const ProgramCase& x, const TransformerSet& set,
                                       std::size_t k, const TransformRunner& runner,
                                       const Detector& detector, std::size_t beam_size) {
  struct PairState {
    Candidate u;
    Candidate v;
    double distance = 0.0;
  };
  DiameterEstimate est;
  est.method = DiameterMethod::coupled_beam;
  const Candidate origin = original_candidate(x);
  std::vector<PairState> beam{{origin, origin, 0.0}};

  for (std::size_t step = 1; step <= k; ++step) {
    // Expand each distinct side once.
    std::vector<const Candidate*> parents;
    std::map<std::string, std::size_t> slot;
    for (const PairState& p : beam) {
      for (const Candidate* side : {&p.u, &p.v}) {
        if (slot.emplace(side->source_hash, parents.size()).second) parents.push_back(side);
      }
    }
    const std::vector<Child> children = expand(parents, set, x, runner, step);
    const std::size_t m = set.members.size();
    auto successors = [&](const Candidate& c) {
      std::vector<const Candidate*> out;
      const std::size_t base = slot.at(c.source_hash) * m;
      for (std::size_t j = 0; j < m; ++j) {
        if (children[base + j].candidate) out.push_back(&*children[base + j].candidate);
      }
      return out;
    };

    std::vector<PairState> pool;
    std::set<std::pair<std::string, std::string>> seen;
    for (const PairState& p : beam) {
      const auto us = successors(p.u);
      const auto vs = successors(p.v);
      for (const Candidate* cu : us) {
        for (const Candidate* cv : vs) {
          if (!seen.emplace(cu->source_hash, cv->source_hash).second) continue;
          pool.push_back({*cu, *cv, 0.0});
        }
      }
    }
    if (pool.empty()) return est;

    std::vector<SourcePair> pairs;
    pairs.reserve(pool.size());
    for (const PairState& p : pool) pairs.push_back({p.u.source, p.v.source});
    const auto scores = detector.score_batch(pairs);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i].distance = scores[i].l;
    std::stable_sort(pool.begin(), pool.end(), [](const PairState& a, const PairState& b) {
      if (a.distance != b.distance) return a.distance > b.distance;
      if (a.u.source_hash != b.u.source_hash) return a.u.source_hash < b.u.source_hash;
      return a.v.source_hash < b.v.source_hash;
    });
    if (pool.size() > beam_size) pool.resize(beam_size);
    beam = std::move(pool);
  }
  est.diameter = beam.front().distance;
  est.witness_u = beam.front().u;
  est.witness_v = beam.front().v;
  return est;
}

/// Sum in extended precision so that a mean of equal values reproduces the
/// value exactly.
double exact_mean(const std::vector<double>& values) {
  long double sum = 0.0L;
  for (double v : values) sum += v;
  return static_cast<double>(sum / static_cast<long double>(values.size()));
}

std::optional<double> diversity_ratio(double diameter, double loo_mean) {
  if (loo_mean > 0.0) return diameter / loo_mean;
  if (diameter == 0.0) return 1.0;
  return std::nullopt;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string_view to_string(DiameterMethod method) {
  switch (method) {
    case DiameterMethod::automatic: return "auto";
    case DiameterMethod::brute_force: return "brute_force";
    case DiameterMethod::coupled_beam: return "coupled_beam";
  }
  return "auto";
}

DiameterMethod parse_diameter_method(std::string_view name) {
  if (name == "auto") return DiameterMethod::automatic;
  if (name == "brute_force") return DiameterMethod::brute_force;
  if (name == "coupled_beam") return DiameterMethod::coupled_beam;
  throw Error(ErrorCode::config, "unknown diameter method '" + std::string(name) + "'");
}

void SearchConfig::validate() const {
  if (beam_size < 1) throw Error(ErrorCode::config, "beam size must be at least 1");
  if (brute_force_cap < 1) throw Error(ErrorCode::config, "brute_force_cap must be positive");
}

SearchReport compose_search(const ProgramCase& x, const TransformerSet& set,
                            const TransformRunner& runner, const Detector& detector,
                            const SearchConfig& config) {
  config.validate();
  set.validate();
  SearchReport report;
  report.original_program_id = x.program.program_id;
  report.config = config;
  const Candidate origin = original_candidate(x);
  report.global_best = origin;
  report.final_beam_best = origin;
  std::vector<Candidate> beam{origin};
  std::unordered_set<std::string> seen{origin.source_hash};
  std::int64_t candidate_ms = 0;

  const auto finish = [&] {
    report.final_beam_best = beam.front();
    report.best = config.track_global_best ? report.global_best : report.final_beam_best;
    report.mean_candidate_ms =
        report.candidates_evaluated == 0
            ? 0.0
            : static_cast<double>(candidate_ms) / static_cast<double>(report.candidates_evaluated);
  };

  try {
    for (std::size_t iteration = 1; iteration <= config.iterations; ++iteration) {
      const auto start = Clock::now();
      IterationRecord record;
      std::vector<const Candidate*> parents;
      for (const Candidate& c : beam) parents.push_back(&c);
      std::vector<Child> children = expand(parents, set, x, runner, iteration);
      record.expanded_count = children.size();

      std::vector<Candidate> pool;
      for (Child& child : children) {
        candidate_ms += child.wall_time_ms;
        ++report.candidates_evaluated;
        if (!child.candidate) continue;
        ++record.filtered_count;
        if (config.dedup && !seen.insert(child.candidate->source_hash).second) {
          ++record.duplicate_count;
          continue;
        }
        child.candidate->wall_time_ms = child.wall_time_ms;
        pool.push_back(std::move(*child.candidate));
      }

      const auto score_start = Clock::now();
      score_against(origin.source, pool, detector);
      if (!pool.empty()) {
        const std::int64_t share = ms_since(score_start) / static_cast<std::int64_t>(pool.size());
        for (Candidate& c : pool) c.wall_time_ms += share;
        candidate_ms += share * static_cast<std::int64_t>(pool.size());
      }
      std::stable_sort(pool.begin(), pool.end(), ranks_before);
      if (pool.size() > config.beam_size) pool.resize(config.beam_size);

      if (pool.empty()) {
        report.terminated_early = true;
        record.best_so_far = report.global_best.distance;
        record.wall_time_ms = ms_since(start);
        report.per_iteration.push_back(std::move(record));
        break;
      }
      beam = std::move(pool);
      if (beam.front().distance > report.global_best.distance) report.global_best = beam.front();
      record.beam = beam;
      record.best_so_far = report.global_best.distance;
      record.wall_time_ms = ms_since(start);
      report.per_iteration.push_back(std::move(record));
    }
  } catch (const Error& e) {
    finish();
    report.valid = false;
    report.error = e.what();
    throw SearchAborted(e, std::move(report));
  }
  finish();
  return report;
}

Candidate brute_force_search(const ProgramCase& x, const TransformerSet& set,
                             const TransformRunner& runner, const Detector& detector,
                             std::size_t k_max, std::uint64_t cap) {
  set.validate();
  const std::uint64_t size = saturating_pow(set.members.size(), k_max);
  if (size > cap) {
    throw Error(ErrorCode::cap_exceeded, "brute force would enumerate about " +
                                             (size == UINT64_MAX ? std::string("2^64+")
                                                                 : std::to_string(size)) +
                                             " sequences (cap " + std::to_string(cap) + ")");
  }
  const Candidate origin = original_candidate(x);
  // A source's subtree depends only on the source and the remaining depth,
  // so revisits at equal or greater depth add nothing.
  std::unordered_set<std::string> seen{origin.source_hash};
  std::vector<Candidate> level{origin};
  std::vector<Candidate> found;
  for (std::size_t depth = 1; depth <= k_max && !level.empty(); ++depth) {
    std::vector<const Candidate*> parents;
    for (const Candidate& c : level) parents.push_back(&c);
    std::vector<Child> children = expand(parents, set, x, runner, depth);
    std::vector<Candidate> next;
    for (Child& child : children) {
      if (!child.candidate || !seen.insert(child.candidate->source_hash).second) continue;
      next.push_back(std::move(*child.candidate));
    }
    score_against(origin.source, next, detector);
    found.insert(found.end(), next.begin(), next.end());
    level = std::move(next);
  }
  Candidate best = origin;
  for (const Candidate& c : found) {
    if (c.distance > best.distance) best = c;
  }
  return best;
}

std::vector<Candidate> reachable_exactly(const ProgramCase& x, const TransformerSet& set,
                                         const TransformRunner& runner, std::size_t k) {
  std::vector<Candidate> level{original_candidate(x)};
  for (std::size_t depth = 1; depth <= k && !level.empty(); ++depth) {
    std::vector<const Candidate*> parents;
    for (const Candidate& c : level) parents.push_back(&c);
    std::vector<Child> children = expand(parents, set, x, runner, depth);
    std::unordered_set<std::string> seen;
    std::vector<Candidate> next;
    for (Child& child : children) {
      if (!child.candidate || !seen.insert(child.candidate->source_hash).second) continue;
      next.push_back(std::move(*child.candidate));
    }
    level = std::move(next);
  }
  return level;
}

DiameterEstimate estimate_diameter(const ProgramCase& x, const TransformerSet& set, std::size_t k,
                                   const TransformRunner& runner, const Detector& detector,
                                   const SearchConfig& config) {
  config.validate();
  set.validate();
  if (k < 1) throw Error(ErrorCode::domain, "diameter needs k >= 1");
  if (resolve_method(config, set.members.size(), k) == DiameterMethod::brute_force) {
    return exact_diameter(x, set, k, runner, detector);
  }
  return coupled_beam_diameter(x, set, k, runner, detector, config.beam_size);
}

DiversityReport diversity(const ProgramCase& x, const TransformerSet& set, std::size_t k,
                          const TransformRunner& runner, const Detector& detector,
                          const SearchConfig& config) {
  if (set.members.size() < 2) {
    throw Error(ErrorCode::domain, "diversity undefined for singleton sets");
  }
  SearchConfig fixed = config;
  fixed.diameter_method = resolve_method(config, set.members.size(), k);

  DiversityReport report;
  report.set_id = set.set_id;
  report.program_id = x.program.program_id;
  report.k = k;
  report.method = fixed.diameter_method;
  report.diameter = estimate_diameter(x, set, k, runner, detector, fixed).diameter;
  std::vector<double> loo;
  for (std::size_t i = 0; i < set.members.size(); ++i) {
    const double d = estimate_diameter(x, set.without(i), k, runner, detector, fixed).diameter;
    report.leave_one_out.push_back({set.members[i].transformer_id, d});
    loo.push_back(d);
  }
  const auto ratio = diversity_ratio(report.diameter, exact_mean(loo));
  if (!ratio) {
    throw Error(ErrorCode::degenerate, "diversity undefined: diameter " +
                                           std::to_string(report.diameter) +
                                           " over zero mean leave-one-out diameter");
  }
  report.diversity = *ratio;
  return report;
}

BoundReport lemma_bound_report(const ProgramCase& x, const TransformerSet& set, std::size_t k,
                               const TransformRunner& runner, const Detector& detector,
                               const SearchConfig& config) {
  if (set.members.size() < 2) {
    throw Error(ErrorCode::domain, "bound report needs at least two transformers");
  }
  if (k < 1) throw Error(ErrorCode::domain, "bound report needs k >= 1");
  set.validate();
  const std::size_t n = set.members.size();
  SearchConfig fixed = config;
  fixed.diameter_method = resolve_method(config, n, k);

  BoundReport report;
  report.set_id = set.set_id;
  report.program_id = x.program.program_id;
  report.k = k;
  report.method = fixed.diameter_method;

  std::map<std::vector<std::size_t>, double> cache;
  auto diameter_of = [&](std::vector<std::size_t> members) {
    std::sort(members.begin(), members.end());
    if (members.empty()) return 0.0;
    if (const auto it = cache.find(members); it != cache.end()) return it->second;
    TransformerSet subset{set.set_id, {}};
    for (std::size_t i : members) subset.members.push_back(set.members[i]);
    const double d = estimate_diameter(x, subset, k, runner, detector, fixed).diameter;
    cache.emplace(members, d);
    return d;
  };

  std::vector<std::size_t> chain;
  std::vector<bool> used(n, false);
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (used[j]) continue;
      auto trial = chain;
      trial.push_back(j);
      const double d = diameter_of(trial);
      if (d > best_d) {
        best_d = d;
        best = j;
      }
    }
    used[best] = true;
    chain.push_back(best);
    report.greedy_sets.emplace_back(set.members[best].transformer_id, best_d);
  }

  for (std::size_t size = 2; size <= n; ++size) {
    const std::vector<std::size_t> members(chain.begin(), chain.begin() + static_cast<long>(size));
    ChainTerm term;
    term.set_size = size;
    term.diameter = diameter_of(members);
    std::vector<double> loo;
    for (std::size_t drop = 0; drop < size; ++drop) {
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < size; ++i) {
        if (i != drop) rest.push_back(members[i]);
      }
      loo.push_back(diameter_of(rest));
    }
    term.leave_one_out_mean = exact_mean(loo);
    term.value = diversity_ratio(term.diameter, term.leave_one_out_mean);
    report.chain_terms.push_back(term);
  }

  const auto first_defined = std::find_if(report.chain_terms.begin(), report.chain_terms.end(),
                                          [](const ChainTerm& t) { return t.value.has_value(); });
  if (first_defined == report.chain_terms.end()) {
    report.flags.push_back("no chain set has a finite diversity; bound undefined");
  } else {
    report.window_start = first_defined->set_size;
    if (report.window_start > 2) {
      report.flags.push_back("chain sets of size 2.." + std::to_string(report.window_start - 1) +
                             " have zero leave-one-out diameter; product starts at size " +
                             std::to_string(report.window_start));
    }
    const std::size_t last = std::min(n, report.window_start + k - 1);
    if (report.window_start + k - 1 > n) {
      report.flags.push_back("chain shorter than k; product truncated to " +
                             std::to_string(last - report.window_start + 1) + " factors");
    }
    long double product = 1.0L;
    bool defined = true;
    for (std::size_t size = report.window_start; size <= last; ++size) {
      const ChainTerm& term = report.chain_terms[size - 2];
      report.per_step_diversity.push_back(term.value);
      if (term.value) {
        product *= *term.value;
      } else {
        defined = false;
        report.flags.push_back("factor for chain size " + std::to_string(size) +
                               " undefined (positive diameter over zero leave-one-out mean)");
      }
    }
    if (defined) report.bound_value = static_cast<double>(product);
  }

  std::vector<Candidate> outs = reachable_exactly(x, set, runner, k);
  score_against(x.program.source_text, outs, detector);
  for (const Candidate& c : outs) report.observed_strength = std::max(report.observed_strength, c.distance);
  if (report.bound_value) {
    report.holds = report.observed_strength <= *report.bound_value;
    if (!*report.holds) report.flags.push_back("observed strength exceeds the bound");
  }
  return report;
}

json to_json(const SearchConfig& c) {
  return {{"beam_size", c.beam_size},
          {"iterations", c.iterations},
          {"dedup", c.dedup},
          {"seed", c.seed},
          {"track_global_best", c.track_global_best},
          {"brute_force_cap", c.brute_force_cap},
          {"diameter_method", to_string(c.diameter_method)}};
}

json to_json(const Candidate& c, TimingFields timing) {
  json out = {{"source", c.source},
              {"source_hash", c.source_hash},
              {"sequence", c.sequence},
              {"distance", c.distance},
              {"iteration_found", c.iteration_found}};
  if (timing == TimingFields::include) out["wall_time_ms"] = c.wall_time_ms;
  return out;
}

json to_json(const SearchReport& r, TimingFields timing) {
  json iterations = json::array();
  for (const IterationRecord& it : r.per_iteration) {
    json beam = json::array();
    for (const Candidate& c : it.beam) beam.push_back(to_json(c, timing));
    json rec = {{"beam", beam},
                {"expanded_count", it.expanded_count},
                {"filtered_count", it.filtered_count},
                {"duplicate_count", it.duplicate_count},
                {"best_so_far", it.best_so_far}};
    if (timing == TimingFields::include) rec["wall_time_ms"] = it.wall_time_ms;
    iterations.push_back(std::move(rec));
  }
  json out = {{"original_program_id", r.original_program_id},
              {"config", to_json(r.config)},
              {"per_iteration", iterations},
              {"best", to_json(r.best, timing)},
              {"global_best", to_json(r.global_best, timing)},
              {"final_beam_best", to_json(r.final_beam_best, timing)},
              {"terminated_early", r.terminated_early},
              {"valid", r.valid},
              {"candidates_evaluated", r.candidates_evaluated}};
  if (!r.error.empty()) out["error"] = r.error;
  if (timing == TimingFields::include) out["mean_candidate_ms"] = r.mean_candidate_ms;
  return out;
}

json to_json(const DiversityReport& r) {
  json loo = json::array();
  for (const LeaveOneOut& l : r.leave_one_out) {
    loo.push_back({{"removed_transformer_id", l.removed_transformer_id}, {"diameter", l.diameter}});
  }
  return {{"set_id", r.set_id},       {"program_id", r.program_id},
          {"k", r.k},                 {"diameter", r.diameter},
          {"leave_one_out", loo},     {"diversity", r.diversity},
          {"method", to_string(r.method)}};
}

json to_json(const BoundReport& r) {
  json greedy = json::array();
  for (const auto& [id, d] : r.greedy_sets) {
    greedy.push_back({{"added_transformer_id", id}, {"diameter_after", d}});
  }
  json terms = json::array();
  for (const ChainTerm& t : r.chain_terms) {
    terms.push_back({{"set_size", t.set_size},
                     {"diameter", t.diameter},
                     {"leave_one_out_mean", t.leave_one_out_mean},
                     {"diversity", optional_json(t.value)}});
  }
  json steps = json::array();
  for (const auto& v : r.per_step_diversity) steps.push_back(optional_json(v));
  return {{"set_id", r.set_id},
          {"program_id", r.program_id},
          {"k", r.k},
          {"method", to_string(r.method)},
          {"greedy_sets", greedy},
          {"chain_terms", terms},
          {"window_start", r.window_start},
          {"per_step_diversity", steps},
          {"bound_value", optional_json(r.bound_value)},
          {"observed_strength", r.observed_strength},
          {"holds", r.holds ? json(*r.holds) : json(nullptr)},
          {"flags", r.flags}};
}

}  // namespace sptw
