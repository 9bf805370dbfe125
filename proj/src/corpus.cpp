// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "sptw/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "sptw/common.hpp"
#include "sptw/sandbox.hpp"

namespace sptw {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::environment, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << data;
  if (!out) throw Error(ErrorCode::environment, "cannot write " + path.string());
}

const json& require(const json& obj, const char* key, json::value_t type, std::size_t line) {
  const auto it = obj.find(key);
  const bool type_ok = it != obj.end() &&
                       (it->type() == type ||
                        (type == json::value_t::number_integer && it->is_number_integer()));
  if (!type_ok) {
    throw Error(ErrorCode::parse,
                "line " + std::to_string(line) + ": missing or mistyped field '" + key + "'");
  }
  return *it;
}

Problem parse_problem(const json& record, std::size_t line) {
  if (!record.is_object()) {
    throw Error(ErrorCode::parse, "line " + std::to_string(line) + ": record is not an object");
  }
  Problem problem;
  problem.problem_id = require(record, "problem_id", json::value_t::string, line).get<std::string>();
  for (const json& t : require(record, "tests", json::value_t::array, line)) {
    UnitTest test;
    test.stdin_text = require(t, "stdin", json::value_t::string, line).get<std::string>();
    test.expected_stdout =
        require(t, "expected_stdout", json::value_t::string, line).get<std::string>();
    test.time_limit_ms =
        require(t, "time_limit_ms", json::value_t::number_integer, line).get<std::int64_t>();
    if (test.time_limit_ms <= 0) {
      throw Error(ErrorCode::invariant,
                  "line " + std::to_string(line) + ": time_limit_ms must be positive");
    }
    problem.tests.push_back(std::move(test));
  }
  if (problem.tests.empty()) {
    throw Error(ErrorCode::invariant, "line " + std::to_string(line) + ": problem has no tests (" +
                                          problem.problem_id + ")");
  }
  for (const json& s : require(record, "solutions", json::value_t::array, line)) {
    problem.solutions.push_back(
        Program::make(require(s, "program_id", json::value_t::string, line).get<std::string>(),
                      problem.problem_id,
                      require(s, "source", json::value_t::string, line).get<std::string>()));
  }
  return problem;
}

/// Floyd's algorithm: k distinct values from [0, n), returned in ascending
/// order.
std::vector<std::uint64_t> sample_distinct(std::uint64_t n, std::uint64_t k, std::mt19937_64& rng) {
  std::set<std::uint64_t> chosen;
  for (std::uint64_t j = n - k; j < n; ++j) {
    std::uniform_int_distribution<std::uint64_t> pick(0, j);
    const std::uint64_t t = pick(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

/// Maps a lexicographic index over {(i, j) : 0 <= i < j < s} back to (i, j).
std::pair<std::size_t, std::size_t> decode_pair_index(std::uint64_t index, std::size_t s) {
  std::size_t i = 0;
  for (;;) {
    const std::uint64_t row = s - 1 - i;
    if (index < row) return {i, i + 1 + static_cast<std::size_t>(index)};
    index -= row;
    ++i;
  }
}

}  // namespace

Program Program::make(std::string program_id, std::string problem_id, std::string source) {
  Program p;
  p.program_id = std::move(program_id);
  p.problem_id = std::move(problem_id);
  p.source_hash = sha256_hex(source);
  p.source_text = std::move(source);
  return p;
}

std::string_view to_string(PairLabel label) {
  return label == PairLabel::clone ? "clone" : "nonclone";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  throw Error(ErrorCode::parse, "unknown split '" + std::string(name) + "'");
}

CodePair CodePair::canonical(std::string x, std::string y, PairLabel label) {
  if (y < x) std::swap(x, y);
  return CodePair{std::move(x), std::move(y), label};
}

std::size_t PairDataset::clone_count() const {
  return static_cast<std::size_t>(std::count_if(
      pairs.begin(), pairs.end(), [](const CodePair& p) { return p.label == PairLabel::clone; }));
}

std::size_t PairDataset::nonclone_count() const { return pairs.size() - clone_count(); }

std::vector<Problem> parse_corpus(std::string_view text) {
  std::vector<Problem> problems;
  std::set<std::string> problem_ids;
  std::set<std::string> program_ids;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (trim(lines[i]).empty()) continue;
    json record;
    try {
      record = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
    Problem problem = parse_problem(record, line_no);
    if (!problem_ids.insert(problem.problem_id).second) {
      throw Error(ErrorCode::conflict, "line " + std::to_string(line_no) +
                                           ": duplicate problem_id " + problem.problem_id);
    }
    for (const Program& p : problem.solutions) {
      if (!program_ids.insert(p.program_id).second) {
        throw Error(ErrorCode::conflict, "line " + std::to_string(line_no) +
                                             ": duplicate program_id " + p.program_id);
      }
    }
    problems.push_back(std::move(problem));
  }
  return problems;
}

std::vector<Problem> load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_file(path));
}

json problem_to_json(const Problem& problem) {
  json tests = json::array();
  for (const UnitTest& t : problem.tests) {
    tests.push_back(
        {{"stdin", t.stdin_text}, {"expected_stdout", t.expected_stdout}, {"time_limit_ms", t.time_limit_ms}});
  }
  json solutions = json::array();
  for (const Program& p : problem.solutions) {
    solutions.push_back({{"program_id", p.program_id}, {"source", p.source_text}});
  }
  return {{"problem_id", problem.problem_id}, {"tests", tests}, {"solutions", solutions}};
}

void write_corpus(const std::filesystem::path& path, std::span<const Problem> problems) {
  std::string out;
  for (const Problem& p : problems) out += problem_to_json(p).dump() + "\n";
  write_file(path, out);
}

FilterResult filter_passing_solutions(std::span<const Problem> problems, const Sandbox& sandbox,
                                      const ExecLimits& limits, unsigned workers) {
  std::vector<const Problem*> ordered;
  for (const Problem& p : problems) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const Problem* x, const Problem* y) { return x->problem_id < y->problem_id; });

  struct Job {
    std::size_t problem;
    std::size_t solution;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    for (std::size_t j = 0; j < ordered[i]->solutions.size(); ++j) jobs.push_back({i, j});
  }
  std::vector<char> passed(jobs.size(), 0);
  parallel_for(jobs.size(), workers == 0 ? default_worker_count() : workers, [&](std::size_t k) {
    const Problem& problem = *ordered[jobs[k].problem];
    const Program& program = problem.solutions[jobs[k].solution];
    passed[k] = sandbox.check_equivalent(program.source_text, problem.tests, limits).equivalent;
  });

  FilterResult result;
  std::size_t k = 0;
  for (const Problem* problem : ordered) {
    Problem kept{problem->problem_id, problem->tests, {}};
    for (const Program& program : problem->solutions) {
      ++result.report.solutions_in;
      if (passed[k++]) {
        kept.solutions.push_back(program);
      } else {
        ++result.report.solutions_dropped;
      }
    }
    if (kept.solutions.empty()) {
      ++result.report.problems_dropped;
      result.report.dropped_problem_ids.push_back(problem->problem_id);
    } else {
      result.problems.push_back(std::move(kept));
    }
  }
  return result;
}

ProblemSplits split_problems(std::span<const Problem> problems, const SplitCounts& counts,
                             std::uint64_t seed) {
  const std::size_t needed = counts.n_train + counts.n_validation + counts.n_test;
  if (needed > problems.size()) {
    throw Error(ErrorCode::bounds, "split needs " + std::to_string(needed) + " problems but only " +
                                       std::to_string(problems.size()) + " available");
  }
  std::vector<const Problem*> ordered;
  for (const Problem& p : problems) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const Problem* x, const Problem* y) { return x->problem_id < y->problem_id; });
  std::mt19937_64 rng(derive_seed(seed, "split"));
  std::shuffle(ordered.begin(), ordered.end(), rng);

  ProblemSplits splits;
  auto take = [&](std::size_t begin, std::size_t count, std::vector<Problem>& out) {
    for (std::size_t i = begin; i < begin + count; ++i) out.push_back(*ordered[i]);
    std::sort(out.begin(), out.end(),
              [](const Problem& x, const Problem& y) { return x.problem_id < y.problem_id; });
  };
  take(0, counts.n_train, splits.train);
  take(counts.n_train, counts.n_validation, splits.validation);
  take(counts.n_train + counts.n_validation, counts.n_test, splits.test);
  return splits;
}

PairDataset build_pairs(std::span<const Problem> problems, std::size_t pairs_per_problem,
                        std::uint64_t seed, Split split) {
  std::vector<const Problem*> ordered;
  for (const Problem& p : problems) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const Problem* x, const Problem* y) { return x->problem_id < y->problem_id; });

  PairDataset dataset;
  dataset.split = split;
  dataset.seed = seed;
  dataset.provenance.pairs_per_problem = pairs_per_problem;
  dataset.provenance.problem_count = ordered.size();

  std::mt19937_64 clone_rng(derive_seed(seed, "clone-pairs"));
  for (const Problem* problem : ordered) {
    std::vector<std::string> ids;
    for (const Program& p : problem->solutions) ids.push_back(p.program_id);
    std::sort(ids.begin(), ids.end());
    const std::uint64_t s = ids.size();
    if (s < 2) continue;
    const std::uint64_t candidates = s * (s - 1) / 2;
    const std::uint64_t take = std::min<std::uint64_t>(pairs_per_problem, candidates);
    for (std::uint64_t index : sample_distinct(candidates, take, clone_rng)) {
      const auto [i, j] = decode_pair_index(index, ids.size());
      dataset.pairs.push_back(CodePair::canonical(ids[i], ids[j], PairLabel::clone));
    }
  }
  const std::size_t clones = dataset.pairs.size();
  if (clones == 0) throw Error(ErrorCode::domain, "no clone pairs available");

  struct Endpoint {
    const std::string* id;
    std::size_t problem;
  };
  std::vector<Endpoint> programs;
  std::uint64_t total = 0;
  std::uint64_t same_problem = 0;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const std::uint64_t s = ordered[i]->solutions.size();
    for (const Program& p : ordered[i]->solutions) programs.push_back({&p.program_id, i});
    total += s;
    same_problem += s * s;
  }
  const std::uint64_t cross_pairs = (total * total - same_problem) / 2;
  if (cross_pairs < clones) {
    throw Error(ErrorCode::bounds, "only " + std::to_string(cross_pairs) +
                                       " non-clone pairs exist but " + std::to_string(clones) +
                                       " are needed for balance");
  }
  std::mt19937_64 nonclone_rng(derive_seed(seed, "nonclone-pairs"));
  std::uniform_int_distribution<std::size_t> pick(0, programs.size() - 1);
  std::set<std::pair<std::string, std::string>> seen;
  while (dataset.pairs.size() < 2 * clones) {
    const Endpoint& x = programs[pick(nonclone_rng)];
    const Endpoint& y = programs[pick(nonclone_rng)];
    if (x.problem == y.problem) continue;
    CodePair pair = CodePair::canonical(*x.id, *y.id, PairLabel::nonclone);
    if (!seen.emplace(pair.a, pair.b).second) continue;
    dataset.pairs.push_back(std::move(pair));
  }
  return dataset;
}

std::string serialize_pairs(const PairDataset& dataset) {
  std::string out;
  for (const CodePair& p : dataset.pairs) {
    out += json{{"a", p.a}, {"b", p.b}, {"label", to_string(p.label)}}.dump();
    out.push_back('\n');
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const PairDataset& dataset,
                   const json& extra_manifest) {
  std::filesystem::create_directories(dir);
  const std::string split(to_string(dataset.split));
  write_file(dir / (split + ".jsonl"), serialize_pairs(dataset));

  const auto& prov = dataset.provenance;
  json manifest = {
      {"split", split},
      {"seed", dataset.seed},
      {"counts",
       {{"clone", dataset.clone_count()},
        {"nonclone", dataset.nonclone_count()},
        {"problems", prov.problem_count},
        {"pairs_per_problem", prov.pairs_per_problem},
        {"splits",
         {{"train", prov.split_counts.n_train},
          {"validation", prov.split_counts.n_validation},
          {"test", prov.split_counts.n_test}}}}},
  };
  for (const auto& [key, value] : extra_manifest.items()) manifest[key] = value;
  write_file(dir / (split + ".manifest.json"), manifest.dump(2) + "\n");

  const auto programs_path = dir / (split + ".programs.jsonl");
  if (!dataset.synthesized.empty()) {
    std::string out;
    for (const Program& p : dataset.synthesized) {
      out += json{{"program_id", p.program_id}, {"problem_id", p.problem_id}, {"source", p.source_text}}
                 .dump();
      out.push_back('\n');
    }
    write_file(programs_path, out);
  }
}

PairDataset read_dataset(const std::filesystem::path& dir, Split split) {
  const std::string name(to_string(split));
  PairDataset dataset;
  dataset.split = split;
  const auto lines = split_lines(read_file(dir / (name + ".jsonl")));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      const json rec = json::parse(lines[i]);
      const std::string label = rec.at("label").get<std::string>();
      if (label != "clone" && label != "nonclone") throw Error(ErrorCode::parse, "bad label " + label);
      dataset.pairs.push_back(CodePair{rec.at("a").get<std::string>(), rec.at("b").get<std::string>(),
                                       label == "clone" ? PairLabel::clone : PairLabel::nonclone});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::parse, "line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  const auto manifest_path = dir / (name + ".manifest.json");
  if (std::filesystem::exists(manifest_path)) {
    const json manifest = json::parse(read_file(manifest_path));
    dataset.seed = manifest.value("seed", std::uint64_t{0});
    if (manifest.contains("counts")) {
      const json& c = manifest["counts"];
      dataset.provenance.pairs_per_problem = c.value("pairs_per_problem", std::size_t{0});
      dataset.provenance.problem_count = c.value("problems", std::size_t{0});
      if (c.contains("splits")) {
        dataset.provenance.split_counts = {c["splits"].value("train", std::size_t{0}),
                                           c["splits"].value("validation", std::size_t{0}),
                                           c["splits"].value("test", std::size_t{0})};
      }
    }
  }
  const auto programs_path = dir / (name + ".programs.jsonl");
  if (std::filesystem::exists(programs_path)) {
    for (const std::string& line : split_lines(read_file(programs_path))) {
      if (trim(line).empty()) continue;
      const json rec = json::parse(line);
      dataset.synthesized.push_back(Program::make(rec.at("program_id").get<std::string>(),
                                                  rec.at("problem_id").get<std::string>(),
                                                  rec.at("source").get<std::string>()));
    }
  }
  return dataset;
}

std::map<std::string, Program> index_programs(std::span<const Problem> problems) {
  std::map<std::string, Program> out;
  for (const Problem& problem : problems) {
    for (const Program& p : problem.solutions) out.emplace(p.program_id, p);
  }
  return out;
}

}  // namespace sptw
