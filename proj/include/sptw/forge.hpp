// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sptw/corpus.hpp"
#include "sptw/detector.hpp"
#include "sptw/transform.hpp"

namespace sptw {

enum class ChatMode { live, record, replay };
std::string_view to_string(ChatMode mode);
ChatMode parse_chat_mode(std::string_view name);

struct ChatClientConfig {
  ChatMode mode = ChatMode::replay;
  std::optional<std::string> endpoint;
  std::string model_id;
  /// Used when a call does not pass its own temperature.
  double temperature = 0.0;
  int max_output_tokens = 2048;
  std::optional<std::filesystem::path> cassette_path;
  std::optional<std::string> api_key_env;
  std::int64_t timeout_ms = 120000;
  int retries = 2;
  std::int64_t backoff_ms = 500;

  void validate() const;
};

struct ChatRequest {
  std::string model;
  double temperature = 0.0;
  int max_output_tokens = 0;
  std::string prompt;
};

/// sha256 over the canonical JSON of {model, temperature, prompt}.
std::string request_digest(const std::string& model, double temperature, const std::string& prompt);

/// Sends one request and returns the completion text.
class ChatTransport {
public:
  virtual ~ChatTransport() = default;
  virtual std::string send(const ChatRequest& request) = 0;
};

/// POST {"model","temperature","max_output_tokens","prompt"} -> {"text"} with
/// a bearer key. Retries transport failures and non-2xx replies.
class HttpChatTransport : public ChatTransport {
public:
  HttpChatTransport(std::string endpoint, std::string api_key, std::int64_t timeout_ms,
                    int retries, std::int64_t backoff_ms);
  std::string send(const ChatRequest& request) override;

private:
  std::string endpoint_;
  std::string api_key_;
  std::int64_t timeout_ms_;
  int retries_;
  std::int64_t backoff_ms_;
};

struct CassetteRecord {
  std::string digest;
  std::string model;
  double temperature = 0.0;
  std::string prompt;
  std::string response;
};

std::vector<CassetteRecord> load_cassette(const std::filesystem::path& path);

/// live: network only. record: network, then append to the cassette. replay:
/// cassette only; repeated identical requests consume that digest's records
/// in file order.
class ChatClient {
public:
  /// Throws Error{config} for an invalid config or, in live/record mode, an
  /// unset API key variable. `transport` overrides the HTTP transport.
  explicit ChatClient(ChatClientConfig config, std::shared_ptr<ChatTransport> transport = nullptr);

  [[nodiscard]] const ChatClientConfig& config() const { return config_; }

  std::string chat(const std::string& prompt, std::optional<double> temperature = std::nullopt);

  /// n completions of one prompt, in sample order. Live calls run
  /// concurrently; replay and record keep sample order deterministic.
  std::vector<std::string> sample(const std::string& prompt, std::size_t n,
                                  std::optional<double> temperature = std::nullopt);

  /// Transport calls made by this client.
  [[nodiscard]] std::size_t network_calls() const { return network_calls_.load(); }

  struct Exchange {
    std::string prompt;
    std::string response;
  };
  /// Every prompt sent and its response, in call order.
  [[nodiscard]] std::vector<Exchange> transcript() const;

private:
  std::string call(const ChatRequest& request);
  std::string replay(const std::string& digest);
  void append_record(const CassetteRecord& record);

  ChatClientConfig config_;
  std::shared_ptr<ChatTransport> transport_;
  std::atomic<std::size_t> network_calls_{0};
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<std::string>> cassette_;
  std::map<std::string, std::size_t> cursor_;
  std::vector<Exchange> transcript_;
};

extern const char* const kDesignTemplate;
extern const char* const kImplementationTemplate;

struct SptDesign {
  std::string design_id;
  std::string name;
  std::string description;
  std::vector<std::string> example_program_ids;
  std::vector<std::string> prior_designs;
};

/// "spt-" + first 12 hex digits of sha256(name).
std::string design_id_for(const std::string& name);

/// One "- name: description" line per design, joined by newlines.
std::string render_design_prompt(std::span<const SptDesign> existing,
                                 std::span<const Program> examples);
std::string render_implementation_prompt(const SptDesign& design);

struct ParsedDesign {
  std::string name;
  std::string description;
};

/// Throws Error{design_parse} when either label is missing or the
/// description label precedes the name label.
ParsedDesign parse_design_response(const std::string& text);

/// Contents of the first fenced code block, else the whole response.
std::string extract_code(const std::string& response);

struct DesignOptions {
  double temperature = 0.1;
  /// Extra attempts per design after a parse failure or duplicate name.
  int retries = 3;
};

/// Generates `count` designs one at a time; each prompt lists `existing` and
/// every design generated so far.
std::vector<SptDesign> design_spts(ChatClient& client, std::span<const Program> examples,
                                   std::span<const SptDesign> existing, std::size_t count,
                                   const DesignOptions& options = {});

struct ImplementationCandidate {
  std::string design_id;
  int candidate_index = 0;
  std::string source;
  std::optional<TransformerEvaluation> evaluation;
};

std::vector<ImplementationCandidate> implement_spt(ChatClient& client, const SptDesign& design,
                                                   std::size_t n, double temperature = 0.8);

struct ForgeResult {
  Transformer transformer;
  std::vector<ImplementationCandidate> candidates;
  std::size_t winner_index = 0;
  bool zero_reward_warning = false;
};

nlohmann::json candidates_json(const ForgeResult& result);

/// implement_spt, Best-of-N over `validation`, then registers the winner as
/// `{design_id}` with its source and the candidate table (candidates.json).
ForgeResult forge_transformer(ChatClient& client, const SptDesign& design, std::size_t n,
                              std::span<const ProgramCase> validation, const Detector& detector,
                              const TransformRunner& runner, Registry& registry,
                              double temperature = 0.8);

nlohmann::json to_json(const SptDesign& d);
SptDesign design_from_json(const nlohmann::json& j);

}  // namespace sptw
