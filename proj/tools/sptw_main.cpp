// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

// sptw: command-line front end for the workbench.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 runtime or
// environment error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sptw/config.hpp"
#include "sptw/corpus.hpp"
#include "sptw/detector.hpp"
#include "sptw/forge.hpp"
#include "sptw/process.hpp"
#include "sptw/sandbox.hpp"
#include "sptw/search.hpp"
#include "sptw/transform.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sptw;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string run_id;
  unsigned workers = 0;
};

struct Context {
  GlobalConfig cfg;
  std::string run_id;
  fs::path run_dir;
};

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::environment, "cannot write " + path.string());
}

std::string default_run_id(const GlobalConfig& cfg) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  return std::string(stamp) + "-" + cfg.digest.substr(0, 8);
}

Context open_context(const Common& common, const std::string& command) {
  Context ctx;
  ctx.cfg = common.config_path.empty() ? parse_config(json::object(), fs::current_path())
                                       : load_config(common.config_path);
  if (common.seed) {
    ctx.cfg.seed = *common.seed;
    ctx.cfg.search.seed = *common.seed;
  }
  if (common.workers > 0) ctx.cfg.sandbox.max_parallel = common.workers;
  if (ctx.cfg.sandbox.max_parallel > 0) set_max_concurrent_processes(ctx.cfg.sandbox.max_parallel);
  ctx.cfg.digest = sha256_hex(to_json(ctx.cfg).dump());
  ctx.run_id = common.run_id.empty() ? default_run_id(ctx.cfg) : common.run_id;
  ctx.run_dir = ctx.cfg.paths.reports_dir / command / ctx.run_id;
  fs::create_directories(ctx.run_dir);
  write_json(ctx.run_dir / "config.json", to_json(ctx.cfg));
  return ctx;
}

std::string safe_name(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return out;
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Prints an aligned table and returns its JSON twin (same rounded values).
json print_table(const std::vector<std::string>& header, const std::vector<std::vector<json>>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : rows) {
    std::vector<std::string> line;
    for (const json& v : row) {
      if (v.is_number_float()) {
        line.push_back(fmt(v.get<double>()));
      } else if (v.is_string()) {
        line.push_back(v.get<std::string>());
      } else {
        line.push_back(v.dump());
      }
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  const auto emit = [&](const std::vector<std::string>& line) {
    std::string out;
    for (std::size_t c = 0; c < line.size(); ++c) {
      out += (c ? "  " : "") + line[c] + std::string(width[c] - line[c].size(), ' ');
    }
    std::cout << out.substr(0, out.find_last_not_of(' ') + 1);
    std::cout << "\n";
  };
  emit(header);
  for (const auto& line : cells) emit(line);

  json twin = json::array();
  for (const auto& row : rows) {
    json obj;
    for (std::size_t c = 0; c < header.size(); ++c) {
      obj[header[c]] = row[c].is_number_float() ? json(round6(row[c].get<double>())) : row[c];
    }
    twin.push_back(std::move(obj));
  }
  return twin;
}

std::vector<Problem> load_problems(const std::string& path) {
  if (path.empty()) throw Error(ErrorCode::usage, "a corpus path is required (--corpus)");
  if (!fs::exists(path)) throw Error(ErrorCode::usage, "corpus not found: " + path);
  return load_corpus(path);
}

fs::path default_corpus(const GlobalConfig& cfg) { return cfg.paths.corpus_dir / "problems.jsonl"; }

/// Explicit ids, else a seeded sample, else every program ordered by id.
std::vector<ProgramCase> select_cases(std::span<const Problem> problems,
                                      const std::vector<std::string>& ids, std::size_t sample,
                                      std::uint64_t seed) {
  std::map<std::string, ProgramCase> catalog = make_catalog(problems);
  std::vector<ProgramCase> out;
  if (!ids.empty()) {
    for (const std::string& id : ids) {
      const auto it = catalog.find(id);
      if (it == catalog.end()) throw Error(ErrorCode::usage, "unknown program id " + id);
      out.push_back(it->second);
    }
    return out;
  }
  for (auto& [id, c] : catalog) out.push_back(std::move(c));
  if (sample > 0 && sample < out.size()) {
    std::mt19937_64 rng(derive_seed(seed, "sample"));
    std::shuffle(out.begin(), out.end(), rng);
    out.resize(sample);
    std::sort(out.begin(), out.end(), [](const ProgramCase& a, const ProgramCase& b) {
      return a.program.program_id < b.program.program_id;
    });
  }
  return out;
}

TransformerSet select_set(const GlobalConfig& cfg, const std::vector<std::string>& ids,
                          const std::string& set_id) {
  Registry registry(cfg.paths.registry_dir);
  TransformerSet set;
  try {
    set = registry.make_set(set_id, ids);
  } catch (const Error& e) {
    throw Error(ErrorCode::usage, e.what());
  }
  if (set.members.empty()) throw Error(ErrorCode::usage, "transformer set is empty");
  return set;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(static_cast<double>(s / v.size()));
}

std::vector<std::size_t> default_splits(std::size_t n) {
  const std::size_t held_out = std::max<std::size_t>(2, n / 8);
  if (n < 3 * held_out) {
    throw Error(ErrorCode::usage, "corpus has " + std::to_string(n) +
                                      " problems; pass --splits explicitly");
  }
  return {n - 2 * held_out, held_out, held_out};
}

// ---- corpus -----------------------------------------------------------------

int cmd_corpus_filter(const Common& common, const std::string& input, std::string output) {
  Context ctx = open_context(common, "corpus-filter");
  const std::vector<Problem> problems = load_problems(input);
  Sandbox sandbox(ctx.cfg.sandbox);
  const FilterResult result =
      filter_passing_solutions(problems, sandbox, ctx.cfg.sandbox.limits, ctx.cfg.sandbox.max_parallel);
  if (output.empty()) output = default_corpus(ctx.cfg).string();
  fs::create_directories(fs::path(output).parent_path());
  write_corpus(output, result.problems);
  const json report = {{"solutions_in", result.report.solutions_in},
                       {"solutions_dropped", result.report.solutions_dropped},
                       {"problems_dropped", result.report.problems_dropped},
                       {"dropped_problem_ids", result.report.dropped_problem_ids},
                       {"problems_out", result.problems.size()}};
  const json table = print_table({"solutions_in", "solutions_dropped", "problems_dropped", "problems_out"},
                                 {{report["solutions_in"], report["solutions_dropped"],
                                   report["problems_dropped"], report["problems_out"]}});
  write_json(ctx.run_dir / "filter.json", report);
  write_json(ctx.run_dir / "table.json", table);
  return 0;
}

int cmd_corpus_build(const Common& common, const std::string& input, std::string out_dir,
                     std::vector<std::size_t> splits, std::size_t pairs_per_problem,
                     bool skip_filter) {
  Context ctx = open_context(common, "corpus-build");
  std::vector<Problem> problems = load_problems(input);
  FilterReport filter;
  if (!skip_filter) {
    Sandbox sandbox(ctx.cfg.sandbox);
    FilterResult result = filter_passing_solutions(problems, sandbox, ctx.cfg.sandbox.limits,
                                                   ctx.cfg.sandbox.max_parallel);
    problems = std::move(result.problems);
    filter = std::move(result.report);
  }
  if (splits.empty()) splits = default_splits(problems.size());
  if (splits.size() != 3) throw Error(ErrorCode::usage, "--splits takes three counts: train,validation,test");
  const SplitCounts counts{splits[0], splits[1], splits[2]};
  const ProblemSplits parts = split_problems(problems, counts, ctx.cfg.seed);

  const fs::path out = out_dir.empty() ? ctx.cfg.paths.corpus_dir : fs::path(out_dir);
  fs::create_directories(out);
  write_corpus(out / "problems.jsonl", problems);
  const json filter_json = {{"solutions_in", filter.solutions_in},
                            {"solutions_dropped", filter.solutions_dropped},
                            {"problems_dropped", filter.problems_dropped},
                            {"dropped_problem_ids", filter.dropped_problem_ids},
                            {"filtered", !skip_filter}};
  write_json(out / "filter.json", filter_json);

  std::vector<std::vector<json>> rows;
  json summary = json::object();
  const std::pair<Split, const std::vector<Problem>*> all[] = {
      {Split::train, &parts.train}, {Split::validation, &parts.validation}, {Split::test, &parts.test}};
  for (const auto& [split, members] : all) {
    if (members->empty()) continue;
    PairDataset ds = build_pairs(*members, pairs_per_problem, ctx.cfg.seed, split);
    ds.provenance.split_counts = counts;
    write_dataset(out, ds);
    rows.push_back({std::string(to_string(split)), members->size(), ds.clone_count(), ds.nonclone_count()});
  }
  const json table = print_table({"split", "problems", "clone_pairs", "nonclone_pairs"}, rows);
  summary["table"] = table;
  summary["filter"] = filter_json;
  summary["output_dir"] = fs::absolute(out).string();
  write_json(ctx.run_dir / "summary.json", summary);
  return 0;
}

// ---- spt --------------------------------------------------------------------

int cmd_spt_eval(const Common& common, const std::string& corpus_path,
                 const std::vector<std::string>& ids, std::size_t sample) {
  Context ctx = open_context(common, "spt-eval");
  const TransformerSet set = select_set(ctx.cfg, ids, "eval");
  const std::vector<Problem> problems =
      load_problems(corpus_path.empty() ? default_corpus(ctx.cfg).string() : corpus_path);
  const std::vector<ProgramCase> cases = select_cases(problems, {}, sample, ctx.cfg.seed);
  Sandbox sandbox(ctx.cfg.sandbox);
  TransformRunner runner(sandbox, apply_options(ctx.cfg));
  const auto detector = make_detector(ctx.cfg.detector);

  std::vector<std::vector<json>> rows;
  json evaluations = json::array();
  for (const Transformer& t : set.members) {
    const TransformerEvaluation e = evaluate_transformer(runner, t, cases, detector.get());
    std::size_t applied = 0;
    for (const ProgramEvaluation& p : e.per_program) applied += p.applied ? 1 : 0;
    rows.push_back({t.transformer_id, e.n, applied, e.correct_and_applicable, e.mean_reward});
    evaluations.push_back(to_json(e));
  }
  const auto applicability = per_program_applicability(runner, set, cases);
  json per_program = json::array();
  for (const ProgramApplicability& a : applicability) {
    per_program.push_back({{"program_id", a.program_id}, {"applicable_count", a.applicable_count}});
  }
  const json table =
      print_table({"transformer", "programs", "applicable", "correct_and_applicable", "mean_reward"}, rows);
  write_json(ctx.run_dir / "evaluation.json",
             {{"table", table}, {"evaluations", evaluations}, {"per_program_applicability", per_program}});
  return 0;
}

ChatClientConfig chat_config(const GlobalConfig& cfg, const std::string& mode_override,
                             const std::string& cassette_override) {
  ChatClientConfig cc = cfg.chat.client;
  if (!mode_override.empty()) cc.mode = parse_chat_mode(mode_override);
  if (!cassette_override.empty()) cc.cassette_path = fs::absolute(cassette_override);
  return cc;
}

/// Five example programs from distinct problems outside any excluded dataset.
std::vector<Program> pick_examples(std::span<const Problem> problems,
                                   const std::vector<std::string>& exclude_dirs, std::uint64_t seed) {
  std::set<std::string> excluded_programs;
  for (const std::string& dir : exclude_dirs) {
    for (Split split : {Split::train, Split::validation, Split::test}) {
      if (!fs::exists(fs::path(dir) / (std::string(to_string(split)) + ".jsonl"))) continue;
      for (const CodePair& p : read_dataset(dir, split).pairs) {
        excluded_programs.insert(p.a);
        excluded_programs.insert(p.b);
      }
    }
  }
  std::vector<const Problem*> pool;
  for (const Problem& p : problems) {
    const bool used = std::any_of(p.solutions.begin(), p.solutions.end(), [&](const Program& s) {
      return excluded_programs.count(s.program_id) > 0;
    });
    if (!used && !p.solutions.empty()) pool.push_back(&p);
  }
  std::sort(pool.begin(), pool.end(),
            [](const Problem* a, const Problem* b) { return a->problem_id < b->problem_id; });
  if (pool.size() < 5) {
    throw Error(ErrorCode::usage, "need 5 problems outside the excluded datasets for design examples, found " +
                                      std::to_string(pool.size()));
  }
  std::mt19937_64 rng(derive_seed(seed, "design-examples"));
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<Program> out;
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<Program> sols = pool[i]->solutions;
    std::sort(sols.begin(), sols.end(),
              [](const Program& a, const Program& b) { return a.program_id < b.program_id; });
    std::uniform_int_distribution<std::size_t> pick(0, sols.size() - 1);
    out.push_back(sols[pick(rng)]);
  }
  return out;
}

std::vector<SptDesign> load_designs(const std::string& path) {
  std::vector<SptDesign> out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::usage, "cannot read designs file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::usage, path + ": " + e.what());
  }
  const json& list = j.is_object() && j.contains("designs") ? j["designs"] : j;
  if (!list.is_array()) throw Error(ErrorCode::usage, path + ": expected a list of designs");
  for (const json& d : list) out.push_back(design_from_json(d));
  return out;
}

/// Registered transformers become existing designs so new ones stay distinct.
std::vector<SptDesign> registry_designs(const GlobalConfig& cfg) {
  std::vector<SptDesign> out;
  if (!fs::exists(cfg.paths.registry_dir)) return out;
  for (const Transformer& t : Registry(cfg.paths.registry_dir).list()) {
    if (t.description.empty()) continue;
    SptDesign d;
    d.design_id = t.provenance.design_id.empty() ? t.transformer_id : t.provenance.design_id;
    d.name = t.name;
    d.description = t.description;
    out.push_back(std::move(d));
  }
  return out;
}

int cmd_spt_design(const Common& common, const std::string& corpus_path,
                   const std::vector<std::string>& exclude, const std::string& existing_path,
                   std::size_t count, const std::string& mode, const std::string& cassette) {
  Context ctx = open_context(common, "spt-design");
  ChatClient client(chat_config(ctx.cfg, mode, cassette));
  const std::vector<Problem> problems =
      load_problems(corpus_path.empty() ? default_corpus(ctx.cfg).string() : corpus_path);
  std::vector<SptDesign> existing = registry_designs(ctx.cfg);
  for (SptDesign& d : load_designs(existing_path)) existing.push_back(std::move(d));
  const std::vector<Program> examples = pick_examples(problems, exclude, ctx.cfg.seed);
  const std::vector<SptDesign> designs =
      design_spts(client, examples, existing, count,
                  {ctx.cfg.chat.design_temperature, ctx.cfg.chat.design_retries});
  json list = json::array();
  std::vector<std::vector<json>> rows;
  for (const SptDesign& d : designs) {
    list.push_back(to_json(d));
    rows.push_back({d.design_id, d.name});
  }
  const json table = print_table({"design_id", "name"}, rows);
  write_json(ctx.run_dir / "designs.json", {{"designs", list}, {"table", table}});
  std::cout << "designs written to " << (ctx.run_dir / "designs.json").string() << "\n";
  return 0;
}

int cmd_spt_implement(const Common& common, const std::string& designs_path,
                      const std::string& design_id, std::size_t n, const std::string& mode,
                      const std::string& cassette) {
  Context ctx = open_context(common, "spt-implement");
  ChatClient client(chat_config(ctx.cfg, mode, cassette));
  const std::vector<SptDesign> designs = load_designs(designs_path);
  json out = json::array();
  std::vector<std::vector<json>> rows;
  for (const SptDesign& d : designs) {
    if (!design_id.empty() && d.design_id != design_id) continue;
    for (const ImplementationCandidate& c :
         implement_spt(client, d, n, ctx.cfg.chat.implementation_temperature)) {
      out.push_back({{"design_id", c.design_id},
                     {"candidate_index", c.candidate_index},
                     {"source_hash", sha256_hex(c.source)},
                     {"source", c.source}});
      rows.push_back({c.design_id, c.candidate_index, sha256_hex(c.source).substr(0, 12)});
    }
  }
  if (out.empty()) throw Error(ErrorCode::usage, "no matching design in " + designs_path);
  const json table = print_table({"design_id", "candidate_index", "source_hash"}, rows);
  write_json(ctx.run_dir / "candidates.json", {{"candidates", out}, {"table", table}});
  return 0;
}

int cmd_spt_forge(const Common& common, const std::string& corpus_path,
                  const std::string& validation_path, const std::vector<std::string>& exclude,
                  const std::string& designs_path, std::size_t count, std::size_t n,
                  std::size_t validation_size, const std::string& mode, const std::string& cassette) {
  Context ctx = open_context(common, "spt-forge");
  // Constructing the client first rejects a missing API key before any work.
  ChatClient client(chat_config(ctx.cfg, mode, cassette));
  const std::vector<Problem> problems =
      load_problems(corpus_path.empty() ? default_corpus(ctx.cfg).string() : corpus_path);
  const std::vector<Problem> validation_problems =
      validation_path.empty() ? problems : load_problems(validation_path);

  std::vector<SptDesign> designs;
  if (!designs_path.empty()) {
    designs = load_designs(designs_path);
  } else {
    const std::vector<Program> examples = pick_examples(problems, exclude, ctx.cfg.seed);
    designs = design_spts(client, examples, registry_designs(ctx.cfg), count,
                          {ctx.cfg.chat.design_temperature, ctx.cfg.chat.design_retries});
  }

  const std::vector<ProgramCase> validation =
      select_cases(validation_problems, {}, validation_size, derive_seed(ctx.cfg.seed, "validation"));
  Sandbox sandbox(ctx.cfg.sandbox);
  TransformRunner runner(sandbox, apply_options(ctx.cfg));
  const auto detector = make_detector(ctx.cfg.detector);
  Registry registry(ctx.cfg.paths.registry_dir);

  std::vector<std::vector<json>> rows;
  json results = json::array();
  for (const SptDesign& d : designs) {
    const ForgeResult r = forge_transformer(client, d, n, validation, *detector, runner, registry,
                                            ctx.cfg.chat.implementation_temperature);
    const double winner_reward = r.candidates[r.winner_index].evaluation->mean_reward;
    rows.push_back({r.transformer.transformer_id, d.name, r.candidates.size(),
                    static_cast<std::size_t>(r.winner_index), winner_reward,
                    r.zero_reward_warning ? "zero_reward" : ""});
    json entry = candidates_json(r);
    entry["design"] = to_json(d);
    entry["transformer_id"] = r.transformer.transformer_id;
    results.push_back(std::move(entry));
    if (r.zero_reward_warning) {
      std::cerr << "warning: every candidate for " << d.name << " scored reward 0\n";
    }
  }
  const json table =
      print_table({"transformer", "name", "candidates", "winner_index", "reward", "flags"}, rows);
  json validation_ids = json::array();
  for (const ProgramCase& c : validation) validation_ids.push_back(c.program.program_id);
  write_json(ctx.run_dir / "forge.json", {{"table", table},
                                          {"validation_program_ids", validation_ids},
                                          {"network_calls", client.network_calls()},
                                          {"results", results}});
  return 0;
}

// ---- search -----------------------------------------------------------------

struct SearchArgs {
  std::string corpus;
  std::vector<std::string> transformers;
  std::vector<std::string> programs;
  std::size_t sample = 0;
  std::string dataset;
  std::string split = "test";
  std::optional<std::size_t> beam;
  std::optional<std::size_t> iters;
  bool no_dedup = false;
  bool final_beam = false;
  std::size_t k = 2;
  std::vector<std::size_t> sizes;
  std::string method;
};

std::vector<ProgramCase> search_cases(const Context& ctx, const SearchArgs& a) {
  const std::vector<Problem> problems =
      load_problems(a.corpus.empty() ? default_corpus(ctx.cfg).string() : a.corpus);
  if (a.dataset.empty()) return select_cases(problems, a.programs, a.sample, ctx.cfg.seed);
  // First element of every clone pair, in dataset order.
  const PairDataset ds = read_dataset(a.dataset, parse_split(a.split));
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const CodePair& p : ds.pairs) {
    if (p.label == PairLabel::clone && seen.insert(p.a).second) ids.push_back(p.a);
  }
  if (a.sample > 0 && a.sample < ids.size()) ids.resize(a.sample);
  return select_cases(problems, ids, 0, ctx.cfg.seed);
}

SearchConfig search_config(const Context& ctx, const SearchArgs& a) {
  SearchConfig sc = ctx.cfg.search;
  if (a.beam) sc.beam_size = *a.beam;
  if (a.iters) sc.iterations = *a.iters;
  if (a.no_dedup) sc.dedup = false;
  if (a.final_beam) sc.track_global_best = false;
  if (!a.method.empty()) sc.diameter_method = parse_diameter_method(a.method);
  sc.validate();
  return sc;
}

int cmd_search_run(const Common& common, const SearchArgs& a) {
  Context ctx = open_context(common, "search-run");
  const TransformerSet set = select_set(ctx.cfg, a.transformers, "search");
  const std::vector<ProgramCase> cases = search_cases(ctx, a);
  const SearchConfig sc = search_config(ctx, a);
  Sandbox sandbox(ctx.cfg.sandbox);
  TransformRunner runner(sandbox, apply_options(ctx.cfg));
  const auto detector = make_detector(ctx.cfg.detector);

  std::vector<double> best;
  std::vector<double> per_candidate_ms;
  std::vector<std::vector<json>> rows;
  json reports = json::array();
  const fs::path report_path = ctx.run_dir / (safe_name(ctx.run_id) + ".search.json");
  for (const ProgramCase& x : cases) {
    SearchReport report;
    try {
      report = compose_search(x, set, runner, *detector, sc);
    } catch (const SearchAborted& e) {
      reports.push_back(to_json(e.partial()));
      write_json(report_path, {{"valid", false}, {"error", e.what()}, {"reports", reports}});
      throw;
    }
    reports.push_back(to_json(report));
    best.push_back(report.best.distance);
    per_candidate_ms.push_back(report.mean_candidate_ms);
    rows.push_back({x.program.program_id, report.best.distance,
                    static_cast<std::size_t>(report.best.sequence.size()), report.per_iteration.size(),
                    report.mean_candidate_ms});
  }
  const json table =
      print_table({"program", "best_distance", "sequence_length", "iterations", "ms_per_candidate"}, rows);
  const double mean = mean_of(best);
  const double sd = stddev_of(best);
  std::cout << "best distance: " << fmt(mean) << " +- " << fmt(sd) << " over " << best.size()
            << " programs\n";
  write_json(report_path, {{"valid", true},
                           {"programs", best.size()},
                           {"mean_best_distance", round6(mean)},
                           {"std_best_distance", round6(sd)},
                           {"mean_candidate_ms", round6(mean_of(per_candidate_ms))},
                           {"config", to_json(sc)},
                           {"table", table},
                           {"reports", reports}});
  return 0;
}

int cmd_search_brute(const Common& common, const SearchArgs& a) {
  Context ctx = open_context(common, "search-brute");
  const TransformerSet set = select_set(ctx.cfg, a.transformers, "brute");
  const std::vector<ProgramCase> cases = search_cases(ctx, a);
  Sandbox sandbox(ctx.cfg.sandbox);
  TransformRunner runner(sandbox, apply_options(ctx.cfg));
  const auto detector = make_detector(ctx.cfg.detector);
  std::vector<std::vector<json>> rows;
  json results = json::array();
  for (const ProgramCase& x : cases) {
    const Candidate c =
        brute_force_search(x, set, runner, *detector, a.k, ctx.cfg.search.brute_force_cap);
    rows.push_back({x.program.program_id, c.distance, c.sequence.size()});
    json r = to_json(c, TimingFields::omit);
    r["program_id"] = x.program.program_id;
    results.push_back(std::move(r));
  }
  const json table = print_table({"program", "best_distance", "sequence_length"}, rows);
  write_json(ctx.run_dir / (safe_name(ctx.run_id) + ".brute.json"), {{"k_max", a.k}, {"table", table}, {"results", results}});
  return 0;
}

int cmd_search_diversity(const Common& common, const SearchArgs& a) {
  Context ctx = open_context(common, "search-diversity");
  const TransformerSet set = select_set(ctx.cfg, a.transformers, "diversity");
  if (set.members.size() < 2) throw Error(ErrorCode::domain, "diversity undefined for singleton sets");
  const std::vector<ProgramCase> cases = search_cases(ctx, a);
  const SearchConfig sc = search_config(ctx, a);
  Sandbox sandbox(ctx.cfg.sandbox);
  TransformRunner runner(sandbox, apply_options(ctx.cfg));
  const auto detector = make_detector(ctx.cfg.detector);
  std::vector<std::size_t> sizes = a.sizes;
  if (sizes.empty()) sizes.push_back(set.members.size());

  std::vector<std::vector<json>> rows;
  json by_size = json::array();
  for (std::size_t size : sizes) {
    if (size < 2) throw Error(ErrorCode::domain, "diversity undefined for singleton sets");
    if (size > set.members.size()) {
      throw Error(ErrorCode::usage, "subset size " + std::to_string(size) + " exceeds the set size " +
                                        std::to_string(set.members.size()));
    }
    TransformerSet subset{set.set_id + "-" + std::to_string(size),
                          {set.members.begin(), set.members.begin() + static_cast<long>(size)}};
    std::vector<double> values;
    json reports = json::array();
    for (const ProgramCase& x : cases) {
      const DiversityReport r = diversity(x, subset, a.k, runner, *detector, sc);
      values.push_back(r.diversity);
      reports.push_back(to_json(r));
    }
    rows.push_back({size, cases.size(), mean_of(values), stddev_of(values)});
    by_size.push_back({{"size", size}, {"mean_diversity", round6(mean_of(values))}, {"reports", reports}});
  }
  const json table = print_table({"size", "programs", "mean_diversity", "std_diversity"}, rows);
  write_json(ctx.run_dir / (safe_name(ctx.run_id) + ".diversity.json"),
             {{"k", a.k}, {"table", table}, {"sizes", by_size}});
  return 0;
}

int cmd_search_bound(const Common& common, const SearchArgs& a) {
  Context ctx = open_context(common, "search-bound");
  const TransformerSet set = select_set(ctx.cfg, a.transformers, "bound");
  if (set.members.size() < 2) throw Error(ErrorCode::domain, "bound report needs at least two transformers");
  const std::vector<ProgramCase> cases = search_cases(ctx, a);
  const SearchConfig sc = search_config(ctx, a);
  Sandbox sandbox(ctx.cfg.sandbox);
  TransformRunner runner(sandbox, apply_options(ctx.cfg));
  const auto detector = make_detector(ctx.cfg.detector);
  std::vector<std::vector<json>> rows;
  json reports = json::array();
  for (const ProgramCase& x : cases) {
    const BoundReport r = lemma_bound_report(x, set, a.k, runner, *detector, sc);
    rows.push_back({x.program.program_id, r.bound_value ? json(*r.bound_value) : json("undefined"),
                    r.observed_strength,
                    r.holds ? json(*r.holds ? "yes" : "no") : json("n/a")});
    reports.push_back(to_json(r));
  }
  const json table = print_table({"program", "bound", "observed", "holds"}, rows);
  write_json(ctx.run_dir / (safe_name(ctx.run_id) + ".bound.json"), {{"k", a.k}, {"table", table}, {"reports", reports}});
  return 0;
}

// ---- augment ----------------------------------------------------------------

int cmd_augment(const Common& common, const std::string& dataset_dir, const std::string& split_name,
                const std::string& corpus_path, const std::vector<std::string>& ids, double prob,
                const std::string& out_dir) {
  Context ctx = open_context(common, "augment");
  if (dataset_dir.empty() || out_dir.empty()) throw Error(ErrorCode::usage, "--dataset and --out are required");
  const TransformerSet set = select_set(ctx.cfg, ids, "augment");
  const std::vector<Problem> problems =
      load_problems(corpus_path.empty() ? default_corpus(ctx.cfg).string() : corpus_path);
  const Split split = parse_split(split_name);
  const PairDataset ds = read_dataset(dataset_dir, split);
  std::map<std::string, ProgramCase> catalog = make_catalog(problems);
  std::map<std::string, const Problem*> by_problem;
  for (const Problem& p : problems) by_problem[p.problem_id] = &p;
  for (const Program& p : ds.synthesized) {
    const auto it = by_problem.find(p.problem_id);
    if (it == by_problem.end()) throw Error(ErrorCode::parse, "synthesized program " + p.program_id + " has unknown problem");
    catalog[p.program_id] = ProgramCase{p, it->second->tests};
  }
  Sandbox sandbox(ctx.cfg.sandbox);
  TransformRunner runner(sandbox, apply_options(ctx.cfg));
  const AugmentResult r = augment_dataset(ds, set, prob, ctx.cfg.seed, catalog, runner);

  json per_transformer = json::object();
  for (const auto& [id, n] : r.replacements_by_transformer) per_transformer[id] = n;
  const json extra = {{"augmentation",
                       {{"probability", prob},
                        {"seed", ctx.cfg.seed},
                        {"source_dataset", fs::absolute(dataset_dir).string()},
                        {"attempts", r.attempts},
                        {"replaced", r.replaced},
                        {"replacements_by_transformer", per_transformer}}}};
  write_dataset(out_dir, r.dataset, extra);
  std::vector<std::vector<json>> rows;
  for (const Transformer& t : set.members) {
    const auto it = r.replacements_by_transformer.find(t.transformer_id);
    rows.push_back({t.transformer_id, it == r.replacements_by_transformer.end() ? 0 : it->second});
  }
  const json table = print_table({"transformer", "replacements"}, rows);
  std::cout << "pairs: " << ds.pairs.size() << "  attempts: " << r.attempts << "  replaced: " << r.replaced << "\n";
  write_json(ctx.run_dir / "augment.json", {{"pairs", ds.pairs.size()},
                                            {"attempts", r.attempts},
                                            {"replaced", r.replaced},
                                            {"table", table}});
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::config:
    case ErrorCode::usage:
    case ErrorCode::domain:
    case ErrorCode::cap_exceeded:
    case ErrorCode::parse:
    case ErrorCode::registry:
    case ErrorCode::conflict:
    case ErrorCode::bounds:
    case ErrorCode::invariant:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sptw: semantics-preserving transformation workbench"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "Config file (JSON)");
    cmd->add_option("--seed", seed, "Root seed (overrides the config)");
    cmd->add_option("--run-id", common.run_id, "Report subdirectory name");
    cmd->add_option("--workers", common.workers, "Concurrent subprocesses");
  };

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Corpus filtering and pair datasets");
  corpus->require_subcommand(1);
  std::string input, output, out_dir;
  std::vector<std::size_t> splits;
  std::size_t pairs_per_problem = 250;
  bool skip_filter = false;
  auto* c_filter = corpus->add_subcommand("filter", "Drop solutions that fail their tests");
  add_common(c_filter);
  c_filter->add_option("--input", input, "Corpus JSONL")->required();
  c_filter->add_option("--output", output, "Filtered corpus JSONL");
  auto* c_build = corpus->add_subcommand("build", "Filter, split and build clone/non-clone pairs");
  add_common(c_build);
  c_build->add_option("--input", input, "Corpus JSONL")->required();
  c_build->add_option("--out", out_dir, "Output directory (default paths.corpus_dir)");
  c_build->add_option("--splits", splits, "Problems per split: train,validation,test")->delimiter(',');
  c_build->add_option("--pairs-per-problem", pairs_per_problem, "Clone pairs per problem");
  c_build->add_flag("--no-filter", skip_filter, "Skip the solution filter");

  // spt
  auto* spt = app.add_subcommand("spt", "Transformer evaluation and forging");
  spt->require_subcommand(1);
  std::string corpus_path, validation_path, designs_path, design_id, chat_mode, cassette;
  std::vector<std::string> ids, exclude;
  std::size_t sample = 0, count = 1, n = 20, validation_size = 20;
  auto* s_eval = spt->add_subcommand("eval", "Correct + applicable counts per transformer");
  add_common(s_eval);
  s_eval->add_option("--corpus", corpus_path, "Corpus JSONL");
  s_eval->add_option("--transformers", ids, "Transformer ids (default: whole registry)")->delimiter(',');
  s_eval->add_option("--sample", sample, "Evaluate a seeded sample of programs");
  const auto add_chat = [&](CLI::App* cmd) {
    cmd->add_option("--chat-mode", chat_mode, "live, record or replay");
    cmd->add_option("--cassette", cassette, "Cassette JSONL");
  };
  auto* s_design = spt->add_subcommand("design", "Ask the model for new transformation designs");
  add_common(s_design);
  add_chat(s_design);
  s_design->add_option("--corpus", corpus_path, "Corpus JSONL supplying example programs");
  s_design->add_option("--exclude-dataset", exclude, "Pair dataset directories to keep examples out of");
  s_design->add_option("--existing", designs_path, "JSON list of existing designs");
  s_design->add_option("--count", count, "Designs to generate");
  auto* s_impl = spt->add_subcommand("implement", "Sample implementations for designs");
  add_common(s_impl);
  add_chat(s_impl);
  s_impl->add_option("--designs", designs_path, "designs.json from spt design")->required();
  s_impl->add_option("--design-id", design_id, "Only this design");
  s_impl->add_option("--n", n, "Candidates per design");
  auto* s_forge = spt->add_subcommand("forge", "Design, implement, select and register transformers");
  add_common(s_forge);
  add_chat(s_forge);
  s_forge->add_option("--corpus", corpus_path, "Corpus JSONL supplying example programs");
  s_forge->add_option("--validation", validation_path, "Corpus JSONL for Best-of-N (default: --corpus)");
  s_forge->add_option("--validation-size", validation_size, "Validation programs sampled");
  s_forge->add_option("--exclude-dataset", exclude, "Pair dataset directories to keep examples out of");
  s_forge->add_option("--designs", designs_path, "Skip the design stage and use these designs");
  s_forge->add_option("--count", count, "Designs to generate");
  s_forge->add_option("--n", n, "Candidates per design");

  // search
  auto* search = app.add_subcommand("search", "Composition search, diversity and bounds");
  search->require_subcommand(1);
  SearchArgs sa;
  std::size_t beam = 0, iters = 0;
  const auto add_search = [&](CLI::App* cmd) {
    add_common(cmd);
    cmd->add_option("--corpus", sa.corpus, "Corpus JSONL");
    cmd->add_option("--transformers", sa.transformers, "Transformer ids (default: whole registry)")->delimiter(',');
    cmd->add_option("--programs", sa.programs, "Program ids")->delimiter(',');
    cmd->add_option("--sample", sa.sample, "Seeded sample of programs");
    cmd->add_option("--dataset", sa.dataset, "Use first elements of clone pairs from this dataset");
    cmd->add_option("--split", sa.split, "Dataset split");
  };
  auto* s_run = search->add_subcommand("run", "Beam search for the strongest composition");
  add_search(s_run);
  s_run->add_option("--beam", beam, "Beam size");
  s_run->add_option("--iters", iters, "Iterations");
  s_run->add_flag("--no-dedup", sa.no_dedup, "Keep duplicate candidates");
  s_run->add_flag("--final-beam", sa.final_beam, "Report the final beam's best instead of the global best");
  auto* s_brute = search->add_subcommand("brute", "Exhaustive search over short sequences");
  add_search(s_brute);
  s_brute->add_option("--k", sa.k, "Maximum sequence length");
  auto* s_div = search->add_subcommand("diversity", "Diameter and diversity of transformer sets");
  add_search(s_div);
  s_div->add_option("--k", sa.k, "Sequence length");
  s_div->add_option("--sizes", sa.sizes, "Subset sizes (prefixes of the set)")->delimiter(',');
  s_div->add_option("--method", sa.method, "auto, brute_force or coupled_beam");
  s_div->add_option("--beam", beam, "Beam size for coupled-pair search");
  auto* s_bound = search->add_subcommand("bound", "Product-of-diversities bound vs observed strength");
  add_search(s_bound);
  s_bound->add_option("--k", sa.k, "Sequence length");
  s_bound->add_option("--method", sa.method, "auto, brute_force or coupled_beam");
  s_bound->add_option("--beam", beam, "Beam size for coupled-pair search");

  // augment
  auto* augment = app.add_subcommand("augment", "Replace pair sides with transformed programs");
  add_common(augment);
  std::string dataset_dir, split_name = "train";
  double prob = 0.5;
  augment->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  augment->add_option("--split", split_name, "Split to augment");
  augment->add_option("--corpus", corpus_path, "Corpus JSONL with the dataset's programs");
  augment->add_option("--transformers", ids, "Transformer ids (default: whole registry)")->delimiter(',');
  augment->add_option("--prob", prob, "Per-pair transformation probability");
  augment->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  const auto given = [](CLI::App* cmd, const char* name) { return cmd->count(name) > 0; };
  for (CLI::App* cmd : {c_filter, c_build, s_eval, s_design, s_impl, s_forge, s_run, s_brute, s_div,
                        s_bound, augment}) {
    if (cmd->parsed() && given(cmd, "--seed")) common.seed = seed;
  }
  for (CLI::App* cmd : {s_run, s_div, s_bound}) {
    if (cmd->parsed() && given(cmd, "--beam")) sa.beam = beam;
  }
  if (s_run->parsed() && given(s_run, "--iters")) sa.iters = iters;

  try {
    if (c_filter->parsed()) return cmd_corpus_filter(common, input, output);
    if (c_build->parsed()) {
      return cmd_corpus_build(common, input, out_dir, splits, pairs_per_problem, skip_filter);
    }
    if (s_eval->parsed()) return cmd_spt_eval(common, corpus_path, ids, sample);
    if (s_design->parsed()) {
      return cmd_spt_design(common, corpus_path, exclude, designs_path, count, chat_mode, cassette);
    }
    if (s_impl->parsed()) return cmd_spt_implement(common, designs_path, design_id, n, chat_mode, cassette);
    if (s_forge->parsed()) {
      return cmd_spt_forge(common, corpus_path, validation_path, exclude, designs_path, count, n,
                           validation_size, chat_mode, cassette);
    }
    if (s_run->parsed()) return cmd_search_run(common, sa);
    if (s_brute->parsed()) return cmd_search_brute(common, sa);
    if (s_div->parsed()) return cmd_search_diversity(common, sa);
    if (s_bound->parsed()) return cmd_search_bound(common, sa);
    if (augment->parsed()) {
      return cmd_augment(common, dataset_dir, split_name, corpus_path, ids, prob, out_dir);
    }
  } catch (const Error& e) {
    std::cerr << "sptw: " << to_string(e.code()) << " error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "sptw: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
