// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "sptw/common.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>

namespace sptw {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::invariant: return "invariant";
    case ErrorCode::bounds: return "bounds";
    case ErrorCode::environment: return "environment";
    case ErrorCode::registry: return "registry";
    case ErrorCode::scoring: return "scoring";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::transport: return "transport";
    case ErrorCode::cassette_miss: return "cassette_miss";
    case ErrorCode::design_parse: return "design_parse";
    case ErrorCode::domain: return "domain";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::cap_exceeded: return "cap_exceeded";
    case ErrorCode::config: return "config";
    case ErrorCode::usage: return "usage";
  }
  return "unknown";
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::environment, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose) {
  const std::string hex = sha256_hex(std::to_string(root) + ":" + std::string(purpose));
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

std::string trim(std::string_view s) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < s.size()) lines.emplace_back(s.substr(start));
      break;
    }
    std::string_view line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = nl + 1;
  }
  return lines;
}

std::vector<std::string> substitute_argv(const std::vector<std::string>& argv,
                                         std::string_view placeholder,
                                         std::string_view value) {
  std::vector<std::string> out;
  out.reserve(argv.size());
  for (std::string arg : argv) {
    std::size_t pos = 0;
    while ((pos = arg.find(placeholder, pos)) != std::string::npos) {
      arg.replace(pos, placeholder.size(), value);
      pos += value.size();
    }
    out.push_back(std::move(arg));
  }
  return out;
}

unsigned default_worker_count() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

}  // namespace sptw
