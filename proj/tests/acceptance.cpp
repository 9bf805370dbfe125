// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Expected values come from oracles in this
// file (plain recursive enumeration, regex Jaccard, hand-built reward sums),
// never from the code under test.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sptw/common.hpp"
#include "sptw/corpus.hpp"
#include "sptw/forge.hpp"
#include "sptw/process.hpp"
#include "sptw/sandbox.hpp"
#include "sptw/search.hpp"
#include "sptw/transform.hpp"
#include "support.hpp"

using namespace sptw;
using nlohmann::json;
using sptw::testing::fixture;
using sptw::testing::oracle_distance;
using sptw::testing::read_file;
using sptw::testing::toy;

namespace {

constexpr double kTol = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Toys used to build fixture sets. All are deterministic.
std::vector<Transformer> toy_pool() {
  return {toy("ca", {"comment", "a"}), toy("cb", {"comment", "b"}), toy("mx", {"mangle", "x"}),
          toy("my", {"mangle", "y"}),  toy("tz", {"toggle", "z"}),  toy("ap", {"append", "pass"}),
          toy("id", {"identity"}),     toy("k0", {"constant"})};
}

class Oracle {
public:
  Oracle(const TransformRunner& runner) : runner_(runner) {}

  /// Outputs of every valid sequence of length exactly k (or 1..k).
  std::vector<std::string> enumerate(const ProgramCase& x, const std::vector<Transformer>& set,
                                     std::size_t k, bool exactly) const {
    std::vector<std::string> out;
    std::function<void(const std::string&, std::size_t)> rec = [&](const std::string& src,
                                                                   std::size_t depth) {
      if (depth > 0 && (!exactly || depth == k)) out.push_back(src);
      if (depth == k) return;
      for (const Transformer& t : set) {
        const ApplyOutcome o = runner_.apply(t, src);
        if (o.status != ApplyStatus::transformed) continue;
        if (!runner_.equivalent(*o.output_source, x.tests)) continue;
        rec(*o.output_source, depth + 1);
      }
    };
    rec(x.program.source_text, 0);
    return out;
  }

  double best(const ProgramCase& x, const std::vector<Transformer>& set, std::size_t k) const {
    double b = 0.0;
    for (const auto& s : enumerate(x, set, k, false)) b = std::max(b, oracle_distance(x.program.source_text, s));
    return b;
  }

  double diameter(const ProgramCase& x, const std::vector<Transformer>& set, std::size_t k) const {
    const auto outs = enumerate(x, set, k, true);
    const std::set<std::string> unique(outs.begin(), outs.end());
    double d = 0.0;
    for (const auto& a : unique) {
      for (const auto& b : unique) d = std::max(d, oracle_distance(a, b));
    }
    return d;
  }

private:
  const TransformRunner& runner_;
};

std::vector<Transformer> pick(const std::vector<Transformer>& pool, const std::vector<std::size_t>& idx) {
  std::vector<Transformer> out;
  for (std::size_t i : idx) out.push_back(pool[i]);
  return out;
}

/// Random subset of the pool, in a random order.
std::vector<Transformer> random_set(std::mt19937_64& rng, const std::vector<Transformer>& pool,
                                    std::size_t size) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(size);
  return pick(pool, idx);
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Env {
  Sandbox sandbox{sptw::testing::fast_sandbox()};
  TransformRunner runner{sandbox, ApplyOptions{}};
  std::unique_ptr<Detector> lexical = make_detector(DetectorHandle{});
  std::vector<ProgramCase> programs = sptw::testing::fixture_cases("programs20.jsonl");
  Oracle oracle{runner};
};

// 1. Wide beam without dedup finds the exhaustive optimum.
Outcome beam_exactness(Env& env) {
  const std::vector<Transformer> members{toy("ca", {"comment", "a"}), toy("cb", {"comment", "b"}),
                                         toy("mx", {"mangle", "x"})};
  const TransformerSet set{"three", members};
  const ProgramCase& x = env.programs.front();
  SearchConfig cfg;
  cfg.iterations = 3;
  cfg.beam_size = 27;
  cfg.dedup = false;
  TransformRunner fresh(env.sandbox, ApplyOptions{});
  const auto start = std::chrono::steady_clock::now();
  const SearchReport r = compose_search(x, set, fresh, *env.lexical, cfg);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const Candidate brute = brute_force_search(x, set, fresh, *env.lexical, 3);
  const double oracle = env.oracle.best(x, members, 3);
  const bool ok = std::abs(r.best.distance - brute.distance) <= kTol &&
                  std::abs(r.best.distance - oracle) <= kTol && seconds < 10.0;
  return {ok, "beam " + fmt(r.best.distance) + " brute " + fmt(brute.distance) + " oracle " + fmt(oracle) +
                  " in " + fmt(seconds) + " s"};
}

// 2. Monotone best-so-far and re-judged validity over randomized searches.
Outcome monotone_and_valid(Env& env) {
  std::mt19937_64 rng(2);
  const auto pool = toy_pool();
  ApplyOptions rejudge_options;
  rejudge_options.memoize = false;
  TransformRunner rejudge(env.sandbox, rejudge_options);
  std::size_t violations = 0;
  for (int i = 0; i < 50; ++i) {
    const ProgramCase& x = env.programs[uniform(rng, 0, env.programs.size() - 1)];
    const TransformerSet set{"r" + std::to_string(i), random_set(rng, pool, uniform(rng, 1, 4))};
    SearchConfig cfg;
    cfg.beam_size = uniform(rng, 1, 3);
    cfg.iterations = uniform(rng, 1, 3);
    cfg.dedup = uniform(rng, 0, 1) == 1;
    cfg.track_global_best = uniform(rng, 0, 3) != 0;
    const SearchReport r = compose_search(x, set, env.runner, *env.lexical, cfg);
    double prev = 0.0;
    for (const IterationRecord& it : r.per_iteration) {
      if (it.best_so_far < prev) ++violations;
      prev = it.best_so_far;
    }
    if (cfg.track_global_best && r.best.distance != prev) ++violations;
    if (r.best.sequence.empty()) {
      if (r.best.source != x.program.source_text || r.best.distance != 0.0) ++violations;
      continue;
    }
    // Replay the sequence and judge the result from scratch.
    std::string src = x.program.source_text;
    for (const std::string& id : r.best.sequence) {
      for (const Transformer& t : set.members) {
        if (t.transformer_id == id) src = rejudge.apply(t, src).output_source.value_or("");
      }
    }
    if (src != r.best.source || !env.sandbox.check_valid(src) || !rejudge.equivalent(src, x.tests) ||
        std::abs(oracle_distance(x.program.source_text, src) - r.best.distance) > kTol) {
      ++violations;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations over 50 searches"};
}

// 3. Coupled pair beam against the exact diameter.
Outcome diameter_agreement(Env& env) {
  std::mt19937_64 rng(3);
  const auto pool = toy_pool();
  std::size_t equal = 0, greater = 0, instances = 0;
  SearchConfig coupled;
  coupled.diameter_method = DiameterMethod::coupled_beam;
  coupled.beam_size = 100;
  SearchConfig exact;
  exact.diameter_method = DiameterMethod::brute_force;
  while (instances < 40) {
    const std::size_t size = uniform(rng, 2, 5);
    const std::size_t k = uniform(rng, 1, 3);
    if (std::pow(static_cast<double>(size), static_cast<double>(k)) > 200.0) continue;
    ++instances;
    const ProgramCase& x = env.programs[uniform(rng, 0, env.programs.size() - 1)];
    const auto members = random_set(rng, pool, size);
    const TransformerSet set{"d", members};
    const double truth = env.oracle.diameter(x, members, k);
    const double lib_exact = estimate_diameter(x, set, k, env.runner, *env.lexical, exact).diameter;
    const double estimate = estimate_diameter(x, set, k, env.runner, *env.lexical, coupled).diameter;
    if (std::abs(lib_exact - truth) > kTol) ++greater;  // the exact path must match the oracle too
    if (estimate > truth + kTol) ++greater;
    if (std::abs(estimate - truth) <= kTol) ++equal;
  }
  const bool ok = greater == 0 && equal * 100 >= 95 * instances;
  return {ok, std::to_string(equal) + "/" + std::to_string(instances) + " equal, " + std::to_string(greater) +
                  " over or inexact"};
}

// 4. Diversity of a duplicated set, lower bound, singleton rejection.
Outcome diversity_properties(Env& env) {
  SearchConfig cfg;
  cfg.diameter_method = DiameterMethod::brute_force;
  std::vector<std::string> problems;
  const ProgramCase& x = env.programs[4];
  const TransformerSet dup{"dup", {toy("m1", {"mangle", "x"}), toy("m2", {"mangle", "x"})}};
  const double d = diversity(x, dup, 2, env.runner, *env.lexical, cfg).diversity;
  if (d != 1.0) problems.push_back("duplicate set gave " + fmt(d));
  const std::vector<std::vector<Transformer>> sets{
      {toy("ca", {"comment", "a"}), toy("cb", {"comment", "b"}), toy("mx", {"mangle", "x"})},
      {toy("mx", {"mangle", "x"}), toy("my", {"mangle", "y"}), toy("tz", {"toggle", "z"})},
      {toy("ca", {"comment", "a"}), toy("ap", {"append", "pass"}), toy("mx", {"mangle", "x"}),
       toy("id", {"identity"})},
      {toy("m1", {"mangle", "x"}), toy("m2", {"mangle", "x"}), toy("cb", {"comment", "b"})}};
  std::size_t checked = 0;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    for (std::size_t p = 0; p < env.programs.size(); p += 5) {
      for (std::size_t k : {1u, 2u}) {
        try {
          const double v = diversity(env.programs[p], TransformerSet{"s", sets[s]}, k, env.runner,
                                     *env.lexical, cfg).diversity;
          ++checked;
          if (v < 1.0) problems.push_back("set " + std::to_string(s) + " gave " + fmt(v));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::degenerate) problems.push_back(e.what());
        }
      }
    }
  }
  try {
    diversity(x, TransformerSet{"one", {toy("ca", {"comment", "a"})}}, 1, env.runner, *env.lexical, cfg);
    problems.push_back("singleton accepted");
  } catch (const Error& e) {
    if (e.code() != ErrorCode::domain || std::string(e.what()) != "diversity undefined for singleton sets") {
      problems.push_back(std::string("singleton: ") + e.what());
    }
  }
  if (checked < 10) problems.push_back("only " + std::to_string(checked) + " defined instances");
  return {problems.empty(), problems.empty() ? "duplicate set 1.0, " + std::to_string(checked) +
                                                   " sets >= 1, singleton rejected"
                                             : problems.front()};
}

/// Diversity ratio with the same conventions the report documents.
std::optional<double> ratio(double d, double mean) {
  if (mean > 0.0) return d / mean;
  if (d == 0.0) return 1.0;
  return std::nullopt;
}

// 5. Bound report against an independent recomputation.
Outcome bound_recomputation(Env& env, std::string& holds_summary) {
  std::mt19937_64 rng(5);
  const auto pool = toy_pool();
  std::size_t mismatches = 0, holds_true = 0, holds_false = 0, undefined = 0, flagged_violations = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t size = uniform(rng, 3, 4);
    const std::size_t k = uniform(rng, 1, 2);
    const ProgramCase& x = env.programs[uniform(rng, 0, env.programs.size() - 1)];
    const auto members = random_set(rng, pool, size);
    const BoundReport r = lemma_bound_report(x, TransformerSet{"b", members}, k, env.runner, *env.lexical,
                                             SearchConfig{});
    // Greedy chain: argmax diameter, lowest index on ties.
    std::vector<std::size_t> chain;
    std::vector<bool> used(size, false);
    for (std::size_t step = 0; step < size; ++step) {
      std::size_t best = size;
      double best_d = -1.0;
      for (std::size_t j = 0; j < size; ++j) {
        if (used[j]) continue;
        auto trial = chain;
        trial.push_back(j);
        const double d = env.oracle.diameter(x, pick(members, trial), k);
        if (d > best_d + kTol) {
          best_d = d;
          best = j;
        }
      }
      used[best] = true;
      chain.push_back(best);
      if (r.greedy_sets.size() != size || r.greedy_sets[step].first != members[best].transformer_id) ++mismatches;
    }
    std::vector<std::optional<double>> terms;
    for (std::size_t s = 2; s <= size; ++s) {
      const std::vector<std::size_t> prefix(chain.begin(), chain.begin() + static_cast<long>(s));
      const double d = env.oracle.diameter(x, pick(members, prefix), k);
      long double sum = 0.0L;
      for (std::size_t drop = 0; drop < s; ++drop) {
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < s; ++i) {
          if (i != drop) rest.push_back(prefix[i]);
        }
        sum += env.oracle.diameter(x, pick(members, rest), k);
      }
      terms.push_back(ratio(d, static_cast<double>(sum / static_cast<long double>(s))));
    }
    std::optional<double> bound;
    std::size_t first = 0;
    while (first < terms.size() && !terms[first]) ++first;
    if (first < terms.size()) {
      double product = 1.0;
      bool defined = true;
      for (std::size_t i = first; i < std::min(terms.size(), first + k); ++i) {
        if (terms[i]) {
          product *= *terms[i];
        } else {
          defined = false;
        }
      }
      if (defined) bound = product;
    }
    if (bound.has_value() != r.bound_value.has_value() ||
        (bound && std::abs(*bound - *r.bound_value) > kTol)) {
      ++mismatches;
    }
    double observed = 0.0;
    for (const auto& s : env.oracle.enumerate(x, members, k, true)) {
      observed = std::max(observed, oracle_distance(x.program.source_text, s));
    }
    if (std::abs(observed - r.observed_strength) > kTol) ++mismatches;
    if (!r.holds) {
      ++undefined;
    } else if (*r.holds) {
      ++holds_true;
    } else {
      ++holds_false;
      const bool surfaced = std::any_of(r.flags.begin(), r.flags.end(), [](const std::string& f) {
        return f.find("exceeds the bound") != std::string::npos;
      });
      if (surfaced) ++flagged_violations;
    }
  }
  if (flagged_violations != holds_false) ++mismatches;
  holds_summary = "holds " + std::to_string(holds_true) + ", violated " + std::to_string(holds_false) +
                  ", undefined " + std::to_string(undefined);
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over 20 instances; " + holds_summary};
}

// 6. Reward and Best-of-N against hand sums.
Outcome reward_oracle(Env& env) {
  const std::vector<Transformer> candidates{toy("id", {"identity"}), toy("ca", {"comment", "a"}),
                                            toy("k0", {"constant"}), toy("mx", {"mangle", "x"}),
                                            toy("br", {"break"})};
  std::vector<ProgramCase> validation;
  for (std::size_t i = 0; i < env.programs.size() && validation.size() < 4; i += 5) {
    validation.push_back(env.programs[i]);
  }
  std::vector<double> expected;
  for (const Transformer& t : candidates) {
    double sum = 0.0;
    for (const ProgramCase& c : validation) {
      const ApplyOutcome o = env.runner.apply(t, c.program.source_text);
      const bool a = o.status == ApplyStatus::transformed && env.sandbox.check_valid(*o.output_source) &&
                     env.sandbox.check_equivalent(*o.output_source, c.tests, ExecLimits{}).equivalent;
      if (a) sum += oracle_distance(c.program.source_text, *o.output_source);
    }
    expected.push_back(sum / static_cast<double>(validation.size()));
  }
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < expected.size(); ++i) {
    if (expected[i] > expected[argmax]) argmax = i;
  }
  const BestOfN best = best_of_n(env.runner, candidates, validation, *env.lexical);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (std::abs(best.table[i].mean_reward - expected[i]) > kTol) ++mismatches;
  }
  const bool ok = mismatches == 0 && best.winner_index == argmax;
  return {ok, std::to_string(mismatches) + " reward mismatches, winner " + std::to_string(best.winner_index) +
                  " expected " + std::to_string(argmax)};
}

// 7. Judge fixture against hand labels.
Outcome judge_labels(Env& env) {
  std::ifstream in(fixture("judge30.jsonl"));
  std::string line;
  std::size_t total = 0, agree = 0;
  std::string first_miss;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    std::vector<UnitTest> tests;
    for (const auto& t : j["tests"]) tests.push_back({t["stdin"], t["expected_stdout"], t["time_limit_ms"]});
    const bool verdict = env.sandbox.check_equivalent(j["source"].get<std::string>(), tests, ExecLimits{}).equivalent;
    ++total;
    if (verdict == (j["label"] == "equivalent")) {
      ++agree;
    } else if (first_miss.empty()) {
      first_miss = j["case_id"];
    }
  }
  const bool ok = total == 30 && agree == 30 && normalize_output("x \n\n") == normalize_output("x");
  return {ok, std::to_string(agree) + "/" + std::to_string(total) +
                  (first_miss.empty() ? "" : " first miss " + first_miss)};
}

// 8. Dataset construction on the six-problem corpus.
Outcome dataset_construction(Env& env) {
  std::vector<std::string> problems;
  const auto corpus = load_corpus(fixture("corpus6.jsonl"));
  const FilterResult f = filter_passing_solutions(corpus, env.sandbox, ExecLimits{});
  if (f.report.solutions_dropped != 6 || f.problems.size() != 6) problems.push_back("filter counts");
  for (const Problem& p : f.problems) {
    if (p.solutions.size() != 3) problems.push_back("problem " + p.problem_id + " kept wrong solutions");
  }
  std::string bytes[2];
  for (int run = 0; run < 2; ++run) {
    ScratchDir dir;
    const ProblemSplits s = split_problems(f.problems, {2, 2, 2}, 17);
    std::set<std::string> ids;
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
      for (const Problem& p : *part) {
        if (!ids.insert(p.problem_id).second) problems.push_back("splits overlap");
      }
    }
    if (ids.size() != 6) problems.push_back("splits lose problems");
    const std::pair<Split, const std::vector<Problem>*> parts[] = {
        {Split::train, &s.train}, {Split::validation, &s.validation}, {Split::test, &s.test}};
    for (const auto& [split, part] : parts) {
      const PairDataset ds = build_pairs(*part, 3, 17, split);
      if (ds.clone_count() != ds.nonclone_count()) problems.push_back("unbalanced");
      std::map<std::string, int> per_problem;
      for (const CodePair& p : ds.pairs) {
        if (p.label == PairLabel::clone) ++per_problem[p.a.substr(0, p.a.rfind('-'))];
      }
      for (const Problem& p : *part) {
        if (per_problem[p.problem_id] != 3) problems.push_back("clone pairs for " + p.problem_id);
      }
      write_dataset(dir.path(), ds);
      bytes[run] += read_file(dir.path() / (std::string(to_string(split)) + ".jsonl"));
      bytes[run] += read_file(dir.path() / (std::string(to_string(split)) + ".manifest.json"));
    }
  }
  if (bytes[0] != bytes[1] || bytes[0].empty()) problems.push_back("runs differ");
  return {problems.empty(), problems.empty() ? "18 kept, 6 dropped, 3 clone pairs per problem, byte-identical reruns"
                                             : problems.front()};
}

// 9. Forge replay through the command line, plus golden prompts.
Outcome forge_replay(Env&) {
  std::vector<std::string> problems;
  ScratchDir dir;
  const SandboxConfig sb = sptw::testing::fast_sandbox();
  std::string registries[2];
  for (int run = 0; run < 2; ++run) {
    const json cfg = {{"sandbox", {{"interpreter_cmd", sb.interpreter_cmd}, {"validity_cmd", sb.validity_cmd}}},
                      {"chat", {{"model_id", "fixture-model"}}},
                      {"paths", {{"registry_dir", "reg" + std::to_string(run)}, {"reports_dir", "reports"}}}};
    const auto cfg_path = dir.path() / ("c" + std::to_string(run) + ".json");
    std::ofstream(cfg_path) << cfg.dump();
    const auto r = sptw::testing::run_command(
        sptw::testing::cli_path() + " spt forge --chat-mode replay --cassette " +
        fixture("forge_cassette.jsonl").string() + " --designs " + fixture("forge_designs.json").string() +
        " --corpus " + fixture("programs20.jsonl").string() + " --validation-size 3 --n 3 --run-id r" +
        std::to_string(run) + " --config " + cfg_path.string());
    if (r.exit_code != 0) {
      problems.push_back("spt forge exit " + std::to_string(r.exit_code) + ": " + r.output);
      continue;
    }
    const json forge = json::parse(read_file(dir.path() / "reports/spt-forge" / ("r" + std::to_string(run)) / "forge.json"));
    if (forge["network_calls"] != 0) problems.push_back("network calls in replay");
    Registry registry(dir.path() / ("reg" + std::to_string(run)));
    for (const Transformer& t : registry.list()) {
      for (const char* f : {"manifest.json", "transform.py", "candidates.json"}) {
        registries[run] += read_file(t.directory / f);
      }
    }
  }
  if (registries[0].empty() || registries[0] != registries[1]) problems.push_back("registry entries differ");

  std::vector<Program> programs;
  for (int i = 1; i <= 5; ++i) {
    const std::string src = i == 4 ? "x = input()\nprint(x)\n" : "print(" + std::to_string(i) + ")\n";
    programs.push_back(Program::make("p" + std::to_string(i), "p", src));
  }
  const std::vector<SptDesign> existing{
      {design_id_for("Loop Unrolling"), "Loop Unrolling", "Unroll every loop with a constant trip count.", {}, {}},
      {design_id_for("Dead Code"), "Dead Code", "Insert statements whose results are never used.", {}, {}}};
  if (render_design_prompt(existing, programs) != read_file(sptw::testing::golden("design_prompt.txt"))) {
    problems.push_back("design prompt differs from golden");
  }
  const SptDesign rename{design_id_for("Rename"), "Rename", "Rename every local variable to a fresh name.", {}, {}};
  if (render_implementation_prompt(rename) != read_file(sptw::testing::golden("implementation_prompt.txt"))) {
    problems.push_back("implementation prompt differs from golden");
  }

  // Design stage from the same cassette, replayed twice.
  auto problems20 = load_corpus(fixture("programs20.jsonl"));
  std::sort(problems20.begin(), problems20.end(),
            [](const Problem& a, const Problem& b) { return a.problem_id < b.problem_id; });
  std::vector<Program> examples;
  for (const Problem& p : problems20) {
    auto sols = p.solutions;
    std::sort(sols.begin(), sols.end(), [](const Program& a, const Program& b) { return a.program_id < b.program_id; });
    examples.push_back(sols.front());
  }
  ChatClientConfig cc;
  cc.model_id = "fixture-model";
  cc.cassette_path = fixture("forge_cassette.jsonl");
  std::string designs[2];
  for (auto& out : designs) {
    ChatClient client(cc);
    for (const SptDesign& d : design_spts(client, examples, {}, 2)) out += to_json(d).dump() + "\n";
    if (client.network_calls() != 0) problems.push_back("design stage used the network");
  }
  if (designs[0] != designs[1]) problems.push_back("design replay differs");
  return {problems.empty(), problems.empty() ? "registries byte-identical, prompts match golden, 0 network calls"
                                             : problems.front()};
}

// 10. Augmentation contract.
Outcome augmentation(Env& env) {
  std::vector<std::string> problems;
  const auto corpus = load_corpus(fixture("programs20.jsonl"));
  const auto catalog = make_catalog(corpus);
  std::vector<std::string> ids;
  for (const auto& [id, c] : catalog) ids.push_back(id);
  // 1000 pairs drawn with replacement from the 20 programs.
  PairDataset ds;
  ds.seed = 10;
  std::mt19937_64 rng(10);
  while (ds.pairs.size() < 1000) {
    const std::string& a = ids[uniform(rng, 0, ids.size() - 1)];
    const std::string& b = ids[uniform(rng, 0, ids.size() - 1)];
    if (a == b) continue;
    const bool clone = catalog.at(a).program.problem_id == catalog.at(b).program.problem_id;
    ds.pairs.push_back(CodePair::canonical(a, b, clone ? PairLabel::clone : PairLabel::nonclone));
  }
  const TransformerSet set{"aug", {toy("ca", {"comment", "a"}), toy("k0", {"constant"}), toy("mx", {"mangle", "x"})}};

  const AugmentResult zero = augment_dataset(ds, set, 0.0, 4, catalog, env.runner);
  if (serialize_pairs(zero.dataset) != serialize_pairs(ds) || zero.replaced != 0) problems.push_back("p=0 changed pairs");

  const AugmentResult half = augment_dataset(ds, set, 0.5, 4, catalog, env.runner);
  const AugmentResult again = augment_dataset(ds, set, 0.5, 4, catalog, env.runner);
  if (serialize_pairs(half.dataset) != serialize_pairs(again.dataset)) problems.push_back("p=0.5 not deterministic");

  // Exact per-attempt applicability: a uniform member on a uniform side.
  std::vector<ProgramCase> cases;
  for (const auto& [id, c] : catalog) cases.push_back(c);
  std::map<std::string, double> applicable;
  for (const ProgramCase& c : cases) {
    std::size_t n = 0;
    for (const Transformer& t : set.members) {
      const ApplyOutcome o = env.runner.apply(t, c.program.source_text);
      if (o.status == ApplyStatus::transformed &&
          env.sandbox.check_equivalent(*o.output_source, c.tests, ExecLimits{}).equivalent) {
        ++n;
      }
    }
    applicable[c.program.program_id] = static_cast<double>(n) / static_cast<double>(set.members.size());
  }
  double alpha = 0.0;
  for (const CodePair& p : ds.pairs) alpha += 0.5 * (applicable[p.a] + applicable[p.b]);
  alpha /= static_cast<double>(ds.pairs.size());
  const double fraction = static_cast<double>(half.replaced) / static_cast<double>(ds.pairs.size());
  if (fraction < 0.40 * alpha || fraction > 0.60 * alpha) problems.push_back("fraction outside bound");

  ApplyOptions fresh_options;
  fresh_options.memoize = false;
  TransformRunner fresh(env.sandbox, fresh_options);
  std::map<std::string, const Program*> synthesized;
  for (const Program& p : half.dataset.synthesized) synthesized[p.program_id] = &p;
  std::size_t rejudged = 0;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const CodePair& p = half.dataset.pairs[i];
    if (p.label != ds.pairs[i].label) problems.push_back("label changed");
    for (const std::string& side : {p.a, p.b}) {
      const auto it = synthesized.find(side);
      if (it == synthesized.end()) continue;
      const ProgramCase& orig = catalog.at(side.substr(0, side.find('~')));
      if (!env.sandbox.check_valid(it->second->source_text) ||
          !fresh.equivalent(it->second->source_text, orig.tests)) {
        problems.push_back("replaced side " + side + " fails its tests");
      }
      ++rejudged;
    }
  }
  return {problems.empty(), "replaced " + fmt(fraction) + " vs alpha " + fmt(alpha) + " bound [" + fmt(0.4 * alpha) +
                                ", " + fmt(0.6 * alpha) + "], " + std::to_string(rejudged) + " sides re-judged" +
                                (problems.empty() ? "" : "; " + problems.front())};
}

// 12. Timing fields.
Outcome timing(Env& env) {
  SearchConfig cfg;
  cfg.iterations = 2;
  cfg.beam_size = 3;
  const TransformerSet set{"t", {toy("ca", {"comment", "a"}), toy("mx", {"mangle", "x"})}};
  ApplyOptions options;
  options.memoize = false;
  TransformRunner runner(env.sandbox, options);
  const SearchReport r = compose_search(env.programs[1], set, runner, *env.lexical, cfg);
  const json j = to_json(r);
  bool ok = j.contains("mean_candidate_ms") && j["mean_candidate_ms"].is_number() && r.candidates_evaluated > 0 &&
            r.mean_candidate_ms > 0.0;
  for (const auto& it : j["per_iteration"]) {
    ok = ok && it.contains("wall_time_ms");
    for (const auto& c : it["beam"]) ok = ok && c.contains("wall_time_ms");
  }
  return {ok, "mean per-candidate cost " + fmt(r.mean_candidate_ms) + " ms over " +
                  std::to_string(r.candidates_evaluated) + " candidates"};
}

}  // namespace

int main() {
  Env env;
  int failures = 0;
  std::string holds_summary;
  const auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << " ["
              << fmt(seconds) << " s]" << std::endl;
  };
  report(1, "beam search exactness", [&] { return beam_exactness(env); });
  report(2, "global-best monotonicity and validity", [&] { return monotone_and_valid(env); });
  report(3, "diameter estimator agreement", [&] { return diameter_agreement(env); });
  report(4, "diversity properties", [&] { return diversity_properties(env); });
  report(5, "bound report recomputation", [&] { return bound_recomputation(env, holds_summary); });
  report(6, "reward and best-of-n", [&] { return reward_oracle(env); });
  report(7, "equivalence oracle labels", [&] { return judge_labels(env); });
  report(8, "dataset construction", [&] { return dataset_construction(env); });
  report(9, "forge replay", [&] { return forge_replay(env); });
  report(10, "augmentation contract", [&] { return augmentation(env); });
  report(12, "timing report", [&] { return timing(env); });
  return failures == 0 ? 0 : 1;
}
