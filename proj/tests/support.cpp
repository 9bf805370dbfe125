// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sptw::testing {

std::filesystem::path fixture(std::string_view name) {
  return std::filesystem::path(SPTW_FIXTURE_DIR) / name;
}

std::filesystem::path golden(std::string_view name) {
  return std::filesystem::path(SPTW_GOLDEN_DIR) / name;
}

std::string toy_path() { return SPT_TOY_PATH; }
std::string cli_path() { return SPTW_CLI_PATH; }

SandboxConfig fast_sandbox() {
  SandboxConfig c;
  c.interpreter_cmd = {"python3", "-S", "{file}"};
  c.validity_cmd = {"python3", "-S", "-c",
                    "import sys; compile(open(sys.argv[1]).read(), sys.argv[1], 'exec')", "{file}"};
  return c;
}

Transformer toy(std::string id, std::vector<std::string> args) {
  Transformer t;
  t.transformer_id = std::move(id);
  t.name = t.transformer_id;
  t.description = "toy transformer";
  t.entry.push_back(toy_path());
  for (std::string& a : args) t.entry.push_back(std::move(a));
  return t;
}

void write_toy_registry(const std::filesystem::path& root, const std::vector<Transformer>& toys) {
  for (const Transformer& t : toys) {
    std::filesystem::create_directories(root / t.transformer_id);
    std::ofstream(root / t.transformer_id / "manifest.json") << manifest_json(t).dump(2) << "\n";
  }
}

std::vector<ProgramCase> fixture_cases(std::string_view corpus_name) {
  const std::vector<Problem> problems = load_corpus(fixture(corpus_name));
  std::vector<ProgramCase> cases = make_cases(problems);
  std::sort(cases.begin(), cases.end(), [](const ProgramCase& a, const ProgramCase& b) {
    return a.program.program_id < b.program.program_id;
  });
  return cases;
}

ProgramCase fixture_case(std::string_view corpus_name, std::string_view program_id) {
  for (ProgramCase& c : fixture_cases(corpus_name)) {
    if (c.program.program_id == program_id) return c;
  }
  throw std::runtime_error("no fixture program " + std::string(program_id));
}

double oracle_similarity(const std::string& a, const std::string& b) {
  static const std::regex word("[A-Za-z0-9_]+");
  auto tokens = [&](const std::string& s) {
    std::set<std::string> out;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), word); it != std::sregex_iterator(); ++it) {
      out.insert(it->str());
    }
    return out;
  };
  const auto ta = tokens(a);
  const auto tb = tokens(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& t : ta) common += tb.count(t);
  return static_cast<double>(common) / static_cast<double>(ta.size() + tb.size() - common);
}

double oracle_distance(const std::string& a, const std::string& b) {
  return 1.0 - oracle_similarity(a, b);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CommandResult run_command(const std::string& command_line) {
  CommandResult r;
  FILE* pipe = popen((command_line + " 2>&1").c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace sptw::testing
