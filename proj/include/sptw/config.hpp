// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include "sptw/detector.hpp"
#include "sptw/forge.hpp"
#include "sptw/sandbox.hpp"
#include "sptw/search.hpp"
#include "sptw/transform.hpp"

namespace sptw {

struct TransformSettings {
  std::int64_t apply_time_limit_ms = 10000;
  std::int64_t apply_memory_bytes = 1LL << 30;
  bool memoize = true;
};

struct ChatSettings {
  ChatClientConfig client;
  double design_temperature = 0.1;
  double implementation_temperature = 0.8;
  int design_retries = 3;
};

struct PathSettings {
  std::filesystem::path registry_dir = "registry";
  std::filesystem::path corpus_dir = "corpus";
  std::filesystem::path reports_dir = "reports";
};

/// Everything a subcommand needs. Relative paths in a config file resolve
/// against the file's directory.
struct GlobalConfig {
  std::uint64_t seed = 0;
  SandboxConfig sandbox;
  TransformSettings transform;
  DetectorHandle detector;
  ChatSettings chat;
  SearchConfig search;
  PathSettings paths;
  /// sha256 of the canonical JSON of this config.
  std::string digest;
};

/// Throws Error{config} on unknown keys, wrong types or invalid values.
GlobalConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
GlobalConfig load_config(const std::filesystem::path& path);
GlobalConfig default_config();

nlohmann::json to_json(const GlobalConfig& c);

ApplyOptions apply_options(const GlobalConfig& c);

}  // namespace sptw
