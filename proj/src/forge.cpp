// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "sptw/forge.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "sptw/common.hpp"
#include "sptw/http.hpp"
#include "sptw/process.hpp"

namespace sptw {
namespace {

using nlohmann::json;

constexpr std::string_view kNameLabel = "Transformation Name:";
constexpr std::string_view kDescriptionLabel = "Description:";

/// Drops leading whitespace and list bullets ("-", "*", "•").
std::string_view strip_bullets(std::string_view line) {
  while (!line.empty()) {
    const unsigned char c = static_cast<unsigned char>(line.front());
    if (c == ' ' || c == '\t' || c == '-' || c == '*') {
      line.remove_prefix(1);
    } else if (line.substr(0, 3) == "\xE2\x80\xA2") {
      line.remove_prefix(3);
    } else {
      break;
    }
  }
  return line;
}

std::string clean_value(std::string_view v) {
  std::string out = trim(v);
  while (!out.empty() && out.front() == '*') out.erase(out.begin());
  while (!out.empty() && out.back() == '*') out.pop_back();
  return trim(out);
}

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
  return text;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

const char* const kDesignTemplate =
    "You are a python programming language expert. Your goal is to design new semantic "
    "preserving transformations.\n"
    "I will give you 5 python programs and you have to suggest a transformation that can be "
    "applied to all the 5 programs.\n"
    "Give an exact description of the transformation such that it can be used to implement the "
    "transformation.\n"
    "The output format should be:\n"
    "- Transformation Name: <name>\n"
    "- Description: <description>\n"
    "\n"
    "The transformation should be distinct from the list of following transformations:\n"
    "{transformation_list}\n"
    "\n"
    "PROGRAMS:\n"
    "{programs}\n";

const char* const kImplementationTemplate =
    "Write a python program that takes in a string (from std input) that represents another "
    "python program, mutates it according to the following transformation and prints the result "
    "(do not print anything else).\n"
    "Transformation: {transformation description}\n"
    "- the obfuscator should ensure that the program is still valid python code\n"
    "- the obfuscator should be semantic preserving\n"
    "- remember to input the entire program which can include multiple lines\n";

std::string_view to_string(ChatMode mode) {
  switch (mode) {
    case ChatMode::live: return "live";
    case ChatMode::record: return "record";
    case ChatMode::replay: return "replay";
  }
  return "replay";
}

ChatMode parse_chat_mode(std::string_view name) {
  if (name == "live") return ChatMode::live;
  if (name == "record") return ChatMode::record;
  if (name == "replay") return ChatMode::replay;
  throw Error(ErrorCode::config, "unknown chat mode '" + std::string(name) + "'");
}

void ChatClientConfig::validate() const {
  if (model_id.empty()) throw Error(ErrorCode::config, "chat: model_id is required");
  if (temperature < 0.0) throw Error(ErrorCode::config, "chat: temperature must be >= 0");
  if (max_output_tokens < 1) throw Error(ErrorCode::config, "chat: max_output_tokens must be positive");
  if (mode != ChatMode::live && !cassette_path) {
    throw Error(ErrorCode::config, std::string("chat: ") + std::string(to_string(mode)) +
                                       " mode needs cassette_path");
  }
  if (mode != ChatMode::replay && (!endpoint || !api_key_env)) {
    throw Error(ErrorCode::config, std::string("chat: ") + std::string(to_string(mode)) +
                                       " mode needs endpoint and api_key_env");
  }
}

std::string request_digest(const std::string& model, double temperature, const std::string& prompt) {
  const json canonical = {{"model", model}, {"temperature", temperature}, {"prompt", prompt}};
  return sha256_hex(canonical.dump());
}

HttpChatTransport::HttpChatTransport(std::string endpoint, std::string api_key,
                                     std::int64_t timeout_ms, int retries,
                                     std::int64_t backoff_ms)
    : endpoint_(std::move(endpoint)),
      api_key_(std::move(api_key)),
      timeout_ms_(timeout_ms),
      retries_(retries),
      backoff_ms_(backoff_ms) {}

std::string HttpChatTransport::send(const ChatRequest& request) {
  const HttpTarget target = parse_http_url(endpoint_);
  const std::string body = json{{"model", request.model},
                                {"temperature", request.temperature},
                                {"max_output_tokens", request.max_output_tokens},
                                {"prompt", request.prompt}}
                               .dump();
  const std::string path = target.path_prefix.empty() ? "/" : "";
  std::string last_error;
  for (int attempt = 0; attempt <= retries_; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms_ << (attempt - 1)));
    }
    HttpReply reply;
    try {
      reply = http_post_json(target, path, body, timeout_ms_,
                             {{"Authorization", "Bearer " + api_key_}});
    } catch (const Error& e) {
      last_error = e.what();
      continue;
    }
    if (reply.status < 200 || reply.status >= 300) {
      last_error = "HTTP " + std::to_string(reply.status);
      continue;
    }
    json parsed;
    try {
      parsed = json::parse(reply.body);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::protocol, std::string("chat reply is not JSON: ") + e.what());
    }
    if (!parsed.is_object() || !parsed.contains("text") || !parsed["text"].is_string()) {
      throw Error(ErrorCode::protocol, "chat reply lacks a string \"text\" field");
    }
    return parsed["text"].get<std::string>();
  }
  throw Error(ErrorCode::transport, "chat request failed after " + std::to_string(retries_) +
                                        " retries: " + last_error);
}

std::vector<CassetteRecord> load_cassette(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config, "cannot open cassette " + path.string());
  std::vector<CassetteRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      CassetteRecord r;
      r.model = j.at("model").get<std::string>();
      r.temperature = j.at("temperature").get<double>();
      r.prompt = j.at("prompt").get<std::string>();
      r.response = j.at("response").get<std::string>();
      r.digest = j.value("digest", request_digest(r.model, r.temperature, r.prompt));
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::parse, path.string() + " line " + std::to_string(line_no) + ": " +
                                        e.what());
    }
  }
  return records;
}

ChatClient::ChatClient(ChatClientConfig config, std::shared_ptr<ChatTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
  if (config_.mode == ChatMode::replay) {
    for (CassetteRecord& r : load_cassette(*config_.cassette_path)) {
      cassette_[r.digest].push_back(std::move(r.response));
    }
    return;
  }
  const char* key = std::getenv(config_.api_key_env->c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::config, "environment variable " + *config_.api_key_env +
                                       " is not set; live chat needs an API key");
  }
  if (!transport_) {
    transport_ = std::make_shared<HttpChatTransport>(*config_.endpoint, key, config_.timeout_ms,
                                                     config_.retries, config_.backoff_ms);
  }
}

std::vector<ChatClient::Exchange> ChatClient::transcript() const {
  std::lock_guard lock(mutex_);
  return transcript_;
}

std::string ChatClient::replay(const std::string& digest) {
  std::lock_guard lock(mutex_);
  const auto it = cassette_.find(digest);
  std::size_t& next = cursor_[digest];
  if (it == cassette_.end() || next >= it->second.size()) {
    throw Error(ErrorCode::cassette_miss,
                "cassette has no " + std::string(next == 0 ? "" : "further ") +
                    "response for request digest " + digest);
  }
  return it->second[next++];
}

void ChatClient::append_record(const CassetteRecord& r) {
  std::lock_guard lock(mutex_);
  std::ofstream out(*config_.cassette_path, std::ios::binary | std::ios::app);
  out << json{{"digest", r.digest},
              {"model", r.model},
              {"temperature", r.temperature},
              {"prompt", r.prompt},
              {"response", r.response}}
             .dump()
      << "\n";
  if (!out) throw Error(ErrorCode::environment, "cannot append to cassette " + config_.cassette_path->string());
}

std::string ChatClient::call(const ChatRequest& request) {
  std::string response;
  if (config_.mode == ChatMode::replay) {
    response = replay(request_digest(request.model, request.temperature, request.prompt));
  } else {
    ++network_calls_;
    response = transport_->send(request);
  }
  std::lock_guard lock(mutex_);
  transcript_.push_back({request.prompt, response});
  return response;
}

std::string ChatClient::chat(const std::string& prompt, std::optional<double> temperature) {
  ChatRequest request{config_.model_id, temperature.value_or(config_.temperature),
                      config_.max_output_tokens, prompt};
  std::string response = call(request);
  if (config_.mode == ChatMode::record) {
    append_record({request_digest(request.model, request.temperature, prompt), request.model,
                   request.temperature, prompt, response});
  }
  return response;
}

std::vector<std::string> ChatClient::sample(const std::string& prompt, std::size_t n,
                                            std::optional<double> temperature) {
  if (config_.mode != ChatMode::live) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(chat(prompt, temperature));
    return out;
  }
  std::vector<std::string> out(n);
  parallel_for(n, std::min<unsigned>(8, default_worker_count() * 2),
               [&](std::size_t i) { out[i] = chat(prompt, temperature); });
  return out;
}

std::string design_id_for(const std::string& name) {
  return "spt-" + sha256_hex(lower(trim(name))).substr(0, 12);
}

std::string render_design_prompt(std::span<const SptDesign> existing,
                                 std::span<const Program> examples) {
  std::string list;
  for (const SptDesign& d : existing) {
    if (!list.empty()) list += "\n";
    list += "- " + d.name + ": " + d.description;
  }
  std::string programs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i > 0) programs += "\n";
    programs += "Program " + std::to_string(i + 1) + ":\n" + examples[i].source_text;
  }
  // Substitute the program slot last so program text containing the other
  // placeholder is left alone.
  std::string out = replace_all(kDesignTemplate, "{transformation_list}", list);
  const std::size_t at = out.find("{programs}");
  out.replace(at, std::string_view("{programs}").size(), programs);
  return out;
}

std::string render_implementation_prompt(const SptDesign& design) {
  std::string out = kImplementationTemplate;
  const std::string_view key = "{transformation description}";
  out.replace(out.find(key), key.size(), design.description);
  return out;
}

ParsedDesign parse_design_response(const std::string& text) {
  const std::vector<std::string> lines = split_lines(text);
  const auto label_at = [&](std::size_t i, std::string_view label) {
    return strip_bullets(lines[i]).substr(0, label.size()) == label;
  };
  std::size_t name_line = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (label_at(i, kNameLabel)) {
      name_line = i;
      break;
    }
  }
  if (name_line == lines.size()) {
    throw Error(ErrorCode::design_parse, "response has no \"Transformation Name:\" line");
  }
  std::size_t desc_line = lines.size();
  for (std::size_t i = name_line + 1; i < lines.size(); ++i) {
    if (label_at(i, kDescriptionLabel)) {
      desc_line = i;
      break;
    }
  }
  if (desc_line == lines.size()) {
    throw Error(ErrorCode::design_parse,
                "response has no \"Description:\" line after the transformation name");
  }
  ParsedDesign out;
  out.name = clean_value(strip_bullets(lines[name_line]).substr(kNameLabel.size()));
  std::string description(strip_bullets(lines[desc_line]).substr(kDescriptionLabel.size()));
  for (std::size_t i = desc_line + 1; i < lines.size(); ++i) {
    if (label_at(i, kNameLabel) || label_at(i, kDescriptionLabel)) break;
    description += "\n" + lines[i];
  }
  out.description = clean_value(description);
  if (out.name.empty()) throw Error(ErrorCode::design_parse, "transformation name is empty");
  if (out.description.empty()) throw Error(ErrorCode::design_parse, "description is empty");
  return out;
}

std::string extract_code(const std::string& response) {
  const std::size_t open = response.find("```");
  if (open == std::string::npos) return response;
  const std::size_t body = response.find('\n', open);
  if (body == std::string::npos) return response;
  std::size_t close = response.find("```", body + 1);
  // Only a fence at the start of a line closes the block.
  while (close != std::string::npos && response[close - 1] != '\n') {
    close = response.find("```", close + 3);
  }
  if (close == std::string::npos) return response.substr(body + 1);
  return response.substr(body + 1, close - body - 1);
}

std::vector<SptDesign> design_spts(ChatClient& client, std::span<const Program> examples,
                                   std::span<const SptDesign> existing, std::size_t count,
                                   const DesignOptions& options) {
  if (examples.size() != 5) {
    throw Error(ErrorCode::domain, "design needs exactly 5 example programs, got " +
                                       std::to_string(examples.size()));
  }
  if (count < 1) throw Error(ErrorCode::domain, "design count must be at least 1");
  std::vector<SptDesign> running(existing.begin(), existing.end());
  std::vector<SptDesign> generated;
  std::vector<std::string> example_ids;
  for (const Program& p : examples) example_ids.push_back(p.program_id);

  for (std::size_t made = 0; made < count; ++made) {
    const std::string prompt = render_design_prompt(running, examples);
    std::string last_response;
    std::string last_problem;
    bool done = false;
    for (int attempt = 0; attempt <= options.retries && !done; ++attempt) {
      last_response = client.chat(prompt, options.temperature);
      ParsedDesign parsed;
      try {
        parsed = parse_design_response(last_response);
      } catch (const Error& e) {
        last_problem = e.what();
        continue;
      }
      const std::string key = lower(parsed.name);
      const bool duplicate = std::any_of(running.begin(), running.end(), [&](const SptDesign& d) {
        return lower(d.name) == key;
      });
      if (duplicate) {
        last_problem = "design \"" + parsed.name + "\" duplicates an existing name";
        continue;
      }
      SptDesign d;
      d.design_id = design_id_for(parsed.name);
      d.name = std::move(parsed.name);
      d.description = std::move(parsed.description);
      d.example_program_ids = example_ids;
      for (const SptDesign& prior : running) d.prior_designs.push_back(prior.name);
      running.push_back(d);
      generated.push_back(std::move(d));
      done = true;
    }
    if (!done) {
      throw Error(ErrorCode::design_parse,
                  last_problem + " (after " + std::to_string(options.retries) +
                      " retries); raw response:\n" + last_response);
    }
  }
  return generated;
}

std::vector<ImplementationCandidate> implement_spt(ChatClient& client, const SptDesign& design,
                                                   std::size_t n, double temperature) {
  if (n < 1) throw Error(ErrorCode::domain, "implementation needs n >= 1");
  const std::vector<std::string> responses =
      client.sample(render_implementation_prompt(design), n, temperature);
  std::vector<ImplementationCandidate> out;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    out.push_back({design.design_id, static_cast<int>(i), extract_code(responses[i]), std::nullopt});
  }
  return out;
}

json candidates_json(const ForgeResult& result) {
  json rows = json::array();
  for (const ImplementationCandidate& c : result.candidates) {
    json row = {{"candidate_index", c.candidate_index},
                {"source_hash", sha256_hex(c.source)},
                {"source", c.source}};
    if (c.evaluation) {
      row["mean_reward"] = c.evaluation->mean_reward;
      row["correct_and_applicable"] = c.evaluation->correct_and_applicable;
      row["evaluation"] = to_json(*c.evaluation);
    }
    rows.push_back(std::move(row));
  }
  json flags = json::array();
  if (result.zero_reward_warning) flags.push_back("zero_reward");
  return {{"design_id", result.candidates.empty() ? std::string{} : result.candidates.front().design_id},
          {"winner_index", result.winner_index},
          {"flags", flags},
          {"candidates", rows}};
}

ForgeResult forge_transformer(ChatClient& client, const SptDesign& design, std::size_t n,
                              std::span<const ProgramCase> validation, const Detector& detector,
                              const TransformRunner& runner, Registry& registry,
                              double temperature) {
  if (validation.empty()) throw Error(ErrorCode::domain, "forge needs a non-empty validation set");
  ForgeResult result;
  result.candidates = implement_spt(client, design, n, temperature);

  const SandboxConfig& sandbox = runner.sandbox().config();
  const std::string script = "transform" + sandbox.source_suffix;
  const std::vector<std::string> entry =
      substitute_argv(sandbox.interpreter_cmd, "{file}", "{dir}/" + script);

  ScratchDir scratch;
  std::vector<Transformer> wrapped;
  for (const ImplementationCandidate& c : result.candidates) {
    Transformer t;
    t.transformer_id = design.design_id + "-c" + std::to_string(c.candidate_index);
    t.name = design.name;
    t.description = design.description;
    t.entry = entry;
    t.directory = scratch.path() / t.transformer_id;
    std::filesystem::create_directories(t.directory);
    std::ofstream(t.directory / script, std::ios::binary) << c.source;
    wrapped.push_back(std::move(t));
  }
  BestOfN best = best_of_n(runner, wrapped, validation, detector);
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    result.candidates[i].evaluation = best.table[i];
  }
  result.winner_index = best.winner_index;
  result.zero_reward_warning = best.table[best.winner_index].mean_reward <= 0.0;

  const ImplementationCandidate& winner = result.candidates[best.winner_index];
  Transformer t;
  t.transformer_id = design.design_id;
  t.name = design.name;
  t.description = design.description;
  t.entry = entry;
  t.provenance.kind = ProvenanceKind::forged;
  t.provenance.model_id = client.config().model_id;
  t.provenance.design_id = design.design_id;
  t.provenance.temperature = temperature;
  t.provenance.candidate_index = winner.candidate_index;
  result.transformer = registry.add(
      std::move(t), {{script, winner.source}, {"candidates.json", candidates_json(result).dump(2) + "\n"}});
  return result;
}

json to_json(const SptDesign& d) {
  return {{"design_id", d.design_id},
          {"name", d.name},
          {"description", d.description},
          {"example_program_ids", d.example_program_ids},
          {"prior_designs", d.prior_designs}};
}

SptDesign design_from_json(const json& j) {
  try {
    SptDesign d;
    d.name = j.at("name").get<std::string>();
    d.description = j.at("description").get<std::string>();
    d.design_id = j.value("design_id", design_id_for(d.name));
    d.example_program_ids = j.value("example_program_ids", std::vector<std::string>{});
    d.prior_designs = j.value("prior_designs", std::vector<std::string>{});
    if (d.name.empty() || d.description.empty()) {
      throw Error(ErrorCode::parse, "design needs a non-empty name and description");
    }
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bad design record: ") + e.what());
  }
}

}  // namespace sptw
