// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "sptw/transform.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sptw/common.hpp"
#include "sptw/process.hpp"

namespace sptw {
namespace {

using nlohmann::json;

class RegistryLock {
public:
  explicit RegistryLock(const std::filesystem::path& root) {
    const auto path = root / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) {
      throw Error(ErrorCode::registry, "cannot lock registry at " + root.string());
    }
  }
  ~RegistryLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  RegistryLock(const RegistryLock&) = delete;
  RegistryLock& operator=(const RegistryLock&) = delete;

private:
  int fd_ = -1;
};

std::string tests_digest(std::span<const UnitTest> tests) {
  std::string blob;
  for (const UnitTest& t : tests) {
    blob += std::to_string(t.stdin_text.size()) + ":" + t.stdin_text;
    blob += std::to_string(t.expected_stdout.size()) + ":" + t.expected_stdout;
    blob += std::to_string(t.time_limit_ms) + ";";
  }
  return sha256_hex(blob);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::registry, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<std::string> Transformer::resolved_entry() const {
  return substitute_argv(entry, "{dir}", directory.string());
}

json manifest_json(const Transformer& t) {
  json prov;
  if (t.provenance.kind == ProvenanceKind::manual) {
    prov = {{"kind", "manual"}};
  } else {
    prov = {{"kind", "forged"},
            {"model_id", t.provenance.model_id},
            {"design_id", t.provenance.design_id},
            {"temperature", t.provenance.temperature},
            {"candidate_index", t.provenance.candidate_index}};
  }
  return {{"transformer_id", t.transformer_id},
          {"name", t.name},
          {"description", t.description},
          {"kind", "external"},
          {"entry", t.entry},
          {"provenance", prov}};
}

Transformer transformer_from_manifest(const json& m, const std::filesystem::path& directory) {
  try {
    Transformer t;
    t.transformer_id = m.at("transformer_id").get<std::string>();
    t.name = m.at("name").get<std::string>();
    t.description = m.value("description", std::string{});
    if (m.value("kind", std::string{"external"}) != "external") {
      throw Error(ErrorCode::registry, "transformer " + t.transformer_id + ": kind must be external");
    }
    t.entry = m.at("entry").get<std::vector<std::string>>();
    if (t.entry.empty()) throw Error(ErrorCode::registry, "transformer " + t.transformer_id + ": empty entry");
    const json prov = m.value("provenance", json{{"kind", "manual"}});
    if (prov.value("kind", std::string{"manual"}) == "forged") {
      t.provenance.kind = ProvenanceKind::forged;
      t.provenance.model_id = prov.value("model_id", std::string{});
      t.provenance.design_id = prov.value("design_id", std::string{});
      t.provenance.temperature = prov.value("temperature", 0.0);
      t.provenance.candidate_index = prov.value("candidate_index", 0);
    }
    t.directory = std::filesystem::absolute(directory).lexically_normal();
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::registry, "bad manifest in " + directory.string() + ": " + e.what());
  }
}

void check_entry(const Transformer& t) {
  const auto argv = t.resolved_entry();
  if (argv.empty() || !resolve_executable(argv.front())) {
    throw Error(ErrorCode::registry, "transformer " + t.transformer_id + ": entry program not found: " +
                                         (argv.empty() ? std::string("<empty>") : argv.front()));
  }
  for (std::size_t i = 0; i < t.entry.size(); ++i) {
    if (t.entry[i].find("{dir}") != std::string::npos && !std::filesystem::exists(argv[i])) {
      throw Error(ErrorCode::registry,
                  "transformer " + t.transformer_id + ": missing artifact " + argv[i]);
    }
  }
}

void TransformerSet::validate() const {
  if (members.empty()) throw Error(ErrorCode::domain, "transformer set '" + set_id + "' is empty");
  std::set<std::string> ids;
  for (const Transformer& t : members) {
    if (!ids.insert(t.transformer_id).second) {
      throw Error(ErrorCode::conflict, "duplicate transformer_id " + t.transformer_id + " in set " + set_id);
    }
  }
}

TransformerSet TransformerSet::without(std::size_t index) const {
  TransformerSet out{set_id + "-minus-" + members.at(index).transformer_id, {}};
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i != index) out.members.push_back(members[i]);
  }
  return out;
}

Registry::Registry(std::filesystem::path root) : root_(std::filesystem::absolute(std::move(root))) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (!std::filesystem::is_directory(root_)) {
    throw Error(ErrorCode::registry, "registry directory unavailable: " + root_.string());
  }
}

std::vector<Transformer> Registry::list() const {
  std::vector<Transformer> out;
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    const auto manifest = entry.path() / "manifest.json";
    if (!entry.is_directory() || !std::filesystem::exists(manifest)) continue;
    json m;
    try {
      m = json::parse(read_text(manifest));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::registry, "bad manifest " + manifest.string() + ": " + e.what());
    }
    out.push_back(transformer_from_manifest(m, entry.path()));
  }
  std::sort(out.begin(), out.end(), [](const Transformer& a, const Transformer& b) {
    return a.transformer_id < b.transformer_id;
  });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].transformer_id == out[i - 1].transformer_id) {
      throw Error(ErrorCode::conflict, "duplicate transformer_id " + out[i].transformer_id);
    }
  }
  return out;
}

Transformer Registry::get(std::string_view transformer_id) const {
  for (Transformer& t : list()) {
    if (t.transformer_id == transformer_id) return t;
  }
  throw Error(ErrorCode::registry, "unknown transformer " + std::string(transformer_id));
}

TransformerSet Registry::make_set(std::string set_id, const std::vector<std::string>& ids) const {
  const auto all = list();
  TransformerSet set{std::move(set_id), {}};
  if (ids.empty()) {
    set.members = all;
  } else {
    for (const std::string& id : ids) {
      const auto it = std::find_if(all.begin(), all.end(),
                                   [&](const Transformer& t) { return t.transformer_id == id; });
      if (it == all.end()) throw Error(ErrorCode::registry, "unknown transformer " + id);
      set.members.push_back(*it);
    }
  }
  set.validate();
  for (const Transformer& t : set.members) check_entry(t);
  return set;
}

Transformer Registry::add(Transformer t, const std::map<std::string, std::string>& files) {
  if (t.transformer_id.empty() || t.transformer_id.find('/') != std::string::npos ||
      t.transformer_id.front() == '.') {
    throw Error(ErrorCode::registry, "invalid transformer_id '" + t.transformer_id + "'");
  }
  RegistryLock lock(root_);
  const auto dir = root_ / t.transformer_id;
  if (std::filesystem::exists(dir)) {
    throw Error(ErrorCode::conflict, "transformer " + t.transformer_id + " already registered");
  }
  std::filesystem::create_directories(dir);
  for (const auto& [name, contents] : files) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    out << contents;
    if (!out) throw Error(ErrorCode::registry, "cannot write " + path.string());
  }
  t.directory = dir;
  try {
    check_entry(t);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    throw;
  }
  std::ofstream(dir / "manifest.json") << manifest_json(t).dump(2) << "\n";
  return t;
}

std::string_view to_string(ApplyStatus status) {
  switch (status) {
    case ApplyStatus::transformed: return "transformed";
    case ApplyStatus::identity: return "identity";
    case ApplyStatus::invalid_output: return "invalid_output";
    case ApplyStatus::crashed: return "crashed";
    case ApplyStatus::timeout: return "timeout";
  }
  return "unknown";
}

std::vector<ProgramCase> make_cases(std::span<const Problem> problems) {
  std::vector<ProgramCase> out;
  for (const Problem& problem : problems) {
    for (const Program& p : problem.solutions) out.push_back({p, problem.tests});
  }
  return out;
}

std::map<std::string, ProgramCase> make_catalog(std::span<const Problem> problems) {
  std::map<std::string, ProgramCase> out;
  for (ProgramCase& c : make_cases(problems)) out.emplace(c.program.program_id, std::move(c));
  return out;
}

TransformRunner::TransformRunner(const Sandbox& sandbox, ApplyOptions options)
    : sandbox_(sandbox), options_(std::move(options)) {
  if (options_.time_limit_ms <= 0) throw Error(ErrorCode::config, "apply time limit must be positive");
  options_.judge_limits.validate();
}

unsigned TransformRunner::workers() const {
  return options_.workers == 0 ? default_worker_count() : options_.workers;
}

std::size_t TransformRunner::spawned_applications() const {
  std::lock_guard lock(mutex_);
  return spawned_;
}

ApplyOutcome TransformRunner::apply(const Transformer& t, const std::string& source) const {
  if (!options_.memoize) return apply_uncached(t, source);
  const std::string key = t.transformer_id + '\x1f' + sha256_hex(source);
  {
    std::lock_guard lock(mutex_);
    if (const auto it = apply_memo_.find(key); it != apply_memo_.end()) return it->second;
  }
  ApplyOutcome outcome = apply_uncached(t, source);
  std::lock_guard lock(mutex_);
  return apply_memo_.emplace(key, std::move(outcome)).first->second;
}

ApplyOutcome TransformRunner::apply_uncached(const Transformer& t, const std::string& source) const {
  const auto argv = t.resolved_entry();
  if (argv.empty() || !resolve_executable(argv.front())) {
    throw Error(ErrorCode::registry, "transformer " + t.transformer_id + ": entry missing");
  }
  ScratchDir dir;
  ProcessSpec spec;
  spec.argv = argv;
  spec.stdin_data = source;
  spec.working_dir = dir.path();
  spec.wall_time_ms = options_.time_limit_ms;
  spec.memory_bytes = options_.memory_bytes;
  spec.max_output_bytes = options_.max_output_bytes;
  if (options_.seed) {
    spec.extra_env.emplace_back(
        "SPT_SEED", std::to_string(derive_seed(*options_.seed,
                                               t.transformer_id + ":" + sha256_hex(source))));
  }
  ProcessResult pr = run_process(spec);
  {
    std::lock_guard lock(mutex_);
    ++spawned_;
  }

  ApplyOutcome outcome;
  outcome.wall_time_ms = pr.wall_time_ms;
  switch (pr.status) {
    case ExecStatus::timeout:
      outcome.status = ApplyStatus::timeout;
      return outcome;
    case ExecStatus::nonzero_exit:
    case ExecStatus::spawn_failure:
      outcome.status = ApplyStatus::crashed;
      outcome.diagnostic = pr.diagnostic.empty() ? pr.stderr_data.substr(0, 2000) : pr.diagnostic;
      return outcome;
    case ExecStatus::output_truncated:
      outcome.status = ApplyStatus::invalid_output;
      outcome.diagnostic = "transformer output exceeded limit";
      return outcome;
    case ExecStatus::ok:
      break;
  }
  if (pr.stdout_data == source) {
    outcome.status = ApplyStatus::identity;
    outcome.output_source = std::move(pr.stdout_data);
    return outcome;
  }
  outcome.status =
      sandbox_.check_valid(pr.stdout_data) ? ApplyStatus::transformed : ApplyStatus::invalid_output;
  outcome.output_source = std::move(pr.stdout_data);
  return outcome;
}

bool TransformRunner::equivalent(const std::string& source, std::span<const UnitTest> tests) const {
  if (!options_.memoize) {
    return sandbox_.check_equivalent(source, tests, options_.judge_limits).equivalent;
  }
  const std::string key = sha256_hex(source) + '\x1f' + tests_digest(tests);
  {
    std::lock_guard lock(mutex_);
    if (const auto it = judge_memo_.find(key); it != judge_memo_.end()) return it->second;
  }
  const bool eq = sandbox_.check_equivalent(source, tests, options_.judge_limits).equivalent;
  std::lock_guard lock(mutex_);
  judge_memo_.emplace(key, eq);
  return eq;
}

json to_json(const TransformerEvaluation& e) {
  json rows = json::array();
  for (const ProgramEvaluation& p : e.per_program) {
    rows.push_back({{"program_id", p.program_id},
                    {"applied", p.applied},
                    {"equivalent", p.equivalent},
                    {"distance", p.distance},
                    {"status", to_string(p.status)}});
  }
  return {{"transformer_id", e.transformer_id},
          {"n", e.n},
          {"correct_and_applicable", e.correct_and_applicable},
          {"mean_reward", e.mean_reward},
          {"per_program", rows}};
}

TransformerEvaluation evaluate_transformer(const TransformRunner& runner, const Transformer& t,
                                           std::span<const ProgramCase> cases,
                                           const Detector* detector) {
  std::vector<const ProgramCase*> ordered;
  for (const ProgramCase& c : cases) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(), [](const ProgramCase* a, const ProgramCase* b) {
    return a->program.program_id < b->program.program_id;
  });

  TransformerEvaluation eval;
  eval.transformer_id = t.transformer_id;
  eval.n = ordered.size();
  eval.per_program.resize(ordered.size());
  std::vector<std::string> outputs(ordered.size());
  parallel_for(ordered.size(), runner.workers(), [&](std::size_t i) {
    const ProgramCase& c = *ordered[i];
    ProgramEvaluation& row = eval.per_program[i];
    row.program_id = c.program.program_id;
    const ApplyOutcome outcome = runner.apply(t, c.program.source_text);
    row.status = outcome.status;
    row.applied = outcome.status == ApplyStatus::transformed;
    if (row.applied) {
      outputs[i] = *outcome.output_source;
      row.equivalent = runner.equivalent(outputs[i], c.tests);
    }
  });

  if (detector != nullptr) {
    std::vector<SourcePair> pairs;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      if (!eval.per_program[i].applied) continue;
      pairs.push_back({ordered[i]->program.source_text, outputs[i]});
      index.push_back(i);
    }
    if (!pairs.empty()) {
      const auto scores = detector->score_batch(pairs);
      for (std::size_t k = 0; k < index.size(); ++k) eval.per_program[index[k]].distance = scores[k].l;
    }
  }

  double total = 0.0;
  for (const ProgramEvaluation& row : eval.per_program) {
    if (row.applied && row.equivalent) {
      ++eval.correct_and_applicable;
      total += row.distance;
    }
  }
  eval.mean_reward = eval.n == 0 ? 0.0 : total / static_cast<double>(eval.n);
  return eval;
}

double reward(const TransformRunner& runner, const Transformer& t,
              std::span<const ProgramCase> validation, const Detector& detector) {
  if (validation.empty()) throw Error(ErrorCode::domain, "reward needs a non-empty validation set");
  return evaluate_transformer(runner, t, validation, &detector).mean_reward;
}

BestOfN best_of_n(const TransformRunner& runner, std::span<const Transformer> candidates,
                  std::span<const ProgramCase> validation, const Detector& detector) {
  if (candidates.empty()) throw Error(ErrorCode::domain, "best_of_n needs at least one candidate");
  if (validation.empty()) throw Error(ErrorCode::domain, "best_of_n needs a non-empty validation set");
  BestOfN result;
  for (const Transformer& t : candidates) {
    result.table.push_back(evaluate_transformer(runner, t, validation, &detector));
  }
  for (std::size_t i = 1; i < result.table.size(); ++i) {
    if (result.table[i].mean_reward > result.table[result.winner_index].mean_reward) {
      result.winner_index = i;
    }
  }
  return result;
}

std::vector<ProgramApplicability> per_program_applicability(const TransformRunner& runner,
                                                            const TransformerSet& set,
                                                            std::span<const ProgramCase> cases) {
  std::vector<const ProgramCase*> ordered;
  for (const ProgramCase& c : cases) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(), [](const ProgramCase* a, const ProgramCase* b) {
    return a->program.program_id < b->program.program_id;
  });
  const std::size_t m = set.members.size();
  std::vector<char> ok(ordered.size() * m, 0);
  parallel_for(ok.size(), runner.workers(), [&](std::size_t k) {
    const ProgramCase& c = *ordered[k / m];
    const ApplyOutcome outcome = runner.apply(set.members[k % m], c.program.source_text);
    ok[k] = outcome.status == ApplyStatus::transformed &&
            runner.equivalent(*outcome.output_source, c.tests);
  });
  std::vector<ProgramApplicability> out;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    ProgramApplicability row{ordered[i]->program.program_id, 0};
    for (std::size_t j = 0; j < m; ++j) row.applicable_count += ok[i * m + j];
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace sptw
