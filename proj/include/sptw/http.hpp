// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sptw {

struct HttpReply {
  int status = 0;
  std::string body;
};

struct HttpTarget {
  std::string scheme_host_port;
  std::string path_prefix;
};

/// Splits "http://host:port/prefix" into the origin and the path prefix
/// (without trailing slash). Throws Error{config} for malformed URLs.
HttpTarget parse_http_url(const std::string& url);

/// Single POST of a JSON body. Throws Error{transport} when no response is
/// received; HTTP error statuses are returned, not thrown.
HttpReply http_post_json(const HttpTarget& target, const std::string& path,
                         const std::string& body, std::int64_t timeout_ms,
                         const std::vector<std::pair<std::string, std::string>>& headers = {});

}  // namespace sptw
