// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "sptw/config.hpp"

#include <fstream>
#include <set>

#include "sptw/common.hpp"

namespace sptw {
namespace {

using nlohmann::json;

/// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw Error(ErrorCode::config, name_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::config, where(key) + ": wrong type");
    }
  }

  void get_path(const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) {
      if (out.is_relative()) out = base / out;
      return;
    }
    get(key, s);
    out = std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  [[nodiscard]] std::string where(const char* key) const { return name_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw Error(ErrorCode::config, "unknown config key " + name_ + "." + key);
    }
  }

private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

template <typename T>
void require(bool ok, Section& s, const char* key, const T& what) {
  if (!ok) throw Error(ErrorCode::config, s.where(key) + " " + what);
}

}  // namespace

GlobalConfig default_config() {
  GlobalConfig c;
  c.digest = sha256_hex(to_json(c).dump());
  return c;
}

GlobalConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  GlobalConfig c;
  Section root(j, "config");
  root.get("seed", c.seed);

  if (const json* s = root.child("sandbox")) {
    Section sec(*s, "sandbox");
    sec.get("interpreter_cmd", c.sandbox.interpreter_cmd);
    sec.get("validity_cmd", c.sandbox.validity_cmd);
    sec.get("source_suffix", c.sandbox.source_suffix);
    sec.get("max_parallel", c.sandbox.max_parallel);
    require(!c.sandbox.interpreter_cmd.empty(), sec, "interpreter_cmd", "must not be empty");
    require(!c.sandbox.validity_cmd.empty(), sec, "validity_cmd", "must not be empty");
    if (const json* l = sec.child("limits")) {
      Section lim(*l, "sandbox.limits");
      lim.get("wall_time_ms", c.sandbox.limits.wall_time_ms);
      lim.get("memory_bytes", c.sandbox.limits.memory_bytes);
      lim.get("max_output_bytes", c.sandbox.limits.max_output_bytes);
      lim.finish();
    }
    sec.finish();
  }
  try {
    c.sandbox.limits.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::config, std::string("sandbox.limits: ") + e.what());
  }

  if (const json* s = root.child("transform")) {
    Section sec(*s, "transform");
    sec.get("apply_time_limit_ms", c.transform.apply_time_limit_ms);
    sec.get("apply_memory_bytes", c.transform.apply_memory_bytes);
    sec.get("memoize", c.transform.memoize);
    require(c.transform.apply_time_limit_ms > 0, sec, "apply_time_limit_ms", "must be positive");
    sec.finish();
  }

  if (const json* s = root.child("detector")) {
    Section sec(*s, "detector");
    std::string kind = std::string(to_string(c.detector.kind));
    sec.get("kind", kind);
    c.detector.kind = parse_detector_kind(kind);
    std::string endpoint;
    sec.get("endpoint", endpoint);
    if (!endpoint.empty()) c.detector.endpoint = endpoint;
    sec.get("timeout_ms", c.detector.timeout_ms);
    sec.get("batch_size", c.detector.batch_size);
    sec.get("retries", c.detector.retries);
    sec.get("backoff_ms", c.detector.backoff_ms);
    sec.get("self_similarity_guaranteed", c.detector.self_similarity_guaranteed);
    sec.finish();
  }
  try {
    c.detector.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::config, std::string("detector: ") + e.what());
  }

  if (const json* s = root.child("chat")) {
    Section sec(*s, "chat");
    ChatClientConfig& cc = c.chat.client;
    std::string mode = std::string(to_string(cc.mode));
    sec.get("mode", mode);
    cc.mode = parse_chat_mode(mode);
    std::string endpoint, key_env;
    sec.get("endpoint", endpoint);
    if (!endpoint.empty()) cc.endpoint = endpoint;
    sec.get("model_id", cc.model_id);
    sec.get("max_output_tokens", cc.max_output_tokens);
    sec.get("api_key_env", key_env);
    if (!key_env.empty()) cc.api_key_env = key_env;
    sec.get("timeout_ms", cc.timeout_ms);
    sec.get("retries", cc.retries);
    sec.get("design_temperature", c.chat.design_temperature);
    sec.get("implementation_temperature", c.chat.implementation_temperature);
    sec.get("design_retries", c.chat.design_retries);
    if (sec.child("cassette_path") != nullptr) {
      std::filesystem::path p;
      sec.get_path("cassette_path", p, base_dir);
      cc.cassette_path = p;
    }
    require(c.chat.design_temperature >= 0.0, sec, "design_temperature", "must be >= 0");
    require(c.chat.implementation_temperature >= 0.0, sec, "implementation_temperature",
            "must be >= 0");
    require(c.chat.design_retries >= 0, sec, "design_retries", "must be >= 0");
    sec.finish();
  }

  if (const json* s = root.child("search")) {
    Section sec(*s, "search");
    sec.get("beam_size", c.search.beam_size);
    sec.get("iterations", c.search.iterations);
    sec.get("dedup", c.search.dedup);
    sec.get("track_global_best", c.search.track_global_best);
    sec.get("brute_force_cap", c.search.brute_force_cap);
    std::string method = std::string(to_string(c.search.diameter_method));
    sec.get("diameter_method", method);
    c.search.diameter_method = parse_diameter_method(method);
    sec.finish();
  }
  c.search.seed = c.seed;
  c.search.validate();

  if (const json* s = root.child("paths")) {
    Section sec(*s, "paths");
    sec.get_path("registry_dir", c.paths.registry_dir, base_dir);
    sec.get_path("corpus_dir", c.paths.corpus_dir, base_dir);
    sec.get_path("reports_dir", c.paths.reports_dir, base_dir);
    sec.finish();
  } else {
    c.paths.registry_dir = base_dir / c.paths.registry_dir;
    c.paths.corpus_dir = base_dir / c.paths.corpus_dir;
    c.paths.reports_dir = base_dir / c.paths.reports_dir;
  }
  root.finish();
  c.digest = sha256_hex(to_json(c).dump());
  return c;
}

GlobalConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
  return parse_config(j, std::filesystem::absolute(path).parent_path());
}

json to_json(const GlobalConfig& c) {
  const ChatClientConfig& cc = c.chat.client;
  json chat = {{"mode", to_string(cc.mode)},
               {"model_id", cc.model_id},
               {"max_output_tokens", cc.max_output_tokens},
               {"timeout_ms", cc.timeout_ms},
               {"retries", cc.retries},
               {"design_temperature", c.chat.design_temperature},
               {"implementation_temperature", c.chat.implementation_temperature},
               {"design_retries", c.chat.design_retries}};
  if (cc.endpoint) chat["endpoint"] = *cc.endpoint;
  if (cc.api_key_env) chat["api_key_env"] = *cc.api_key_env;
  if (cc.cassette_path) chat["cassette_path"] = cc.cassette_path->string();
  json detector = {{"kind", to_string(c.detector.kind)},
                   {"timeout_ms", c.detector.timeout_ms},
                   {"batch_size", c.detector.batch_size},
                   {"retries", c.detector.retries},
                   {"backoff_ms", c.detector.backoff_ms},
                   {"self_similarity_guaranteed", c.detector.self_similarity_guaranteed}};
  if (c.detector.endpoint) detector["endpoint"] = *c.detector.endpoint;
  json search = to_json(c.search);
  search.erase("seed");
  return {{"seed", c.seed},
          {"sandbox",
           {{"interpreter_cmd", c.sandbox.interpreter_cmd},
            {"validity_cmd", c.sandbox.validity_cmd},
            {"source_suffix", c.sandbox.source_suffix},
            {"max_parallel", c.sandbox.max_parallel},
            {"limits",
             {{"wall_time_ms", c.sandbox.limits.wall_time_ms},
              {"memory_bytes", c.sandbox.limits.memory_bytes},
              {"max_output_bytes", c.sandbox.limits.max_output_bytes}}}}},
          {"transform",
           {{"apply_time_limit_ms", c.transform.apply_time_limit_ms},
            {"apply_memory_bytes", c.transform.apply_memory_bytes},
            {"memoize", c.transform.memoize}}},
          {"detector", detector},
          {"chat", chat},
          {"search", search},
          {"paths",
           {{"registry_dir", c.paths.registry_dir.string()},
            {"corpus_dir", c.paths.corpus_dir.string()},
            {"reports_dir", c.paths.reports_dir.string()}}}};
}

ApplyOptions apply_options(const GlobalConfig& c) {
  ApplyOptions o;
  o.time_limit_ms = c.transform.apply_time_limit_ms;
  o.memory_bytes = c.transform.apply_memory_bytes;
  o.memoize = c.transform.memoize;
  o.seed = c.seed;
  o.judge_limits = c.sandbox.limits;
  o.workers = c.sandbox.max_parallel;
  return o;
}

}  // namespace sptw
