// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "sptw/http.hpp"

#include <httplib.h>

#include "sptw/common.hpp"

namespace sptw {

HttpTarget parse_http_url(const std::string& url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::config, "endpoint is not an absolute URL: " + url);
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(ErrorCode::config, "unsupported URL scheme: " + scheme);
  }
  const std::size_t path_start = url.find('/', scheme_end + 3);
  HttpTarget target;
  target.scheme_host_port = url.substr(0, path_start);
  if (path_start != std::string::npos) target.path_prefix = url.substr(path_start);
  while (!target.path_prefix.empty() && target.path_prefix.back() == '/') {
    target.path_prefix.pop_back();
  }
  if (target.scheme_host_port.size() <= scheme_end + 3) {
    throw Error(ErrorCode::config, "endpoint has no host: " + url);
  }
  return target;
}

HttpReply http_post_json(const HttpTarget& target, const std::string& path,
                         const std::string& body, std::int64_t timeout_ms,
                         const std::vector<std::pair<std::string, std::string>>& headers) {
  httplib::Client client(target.scheme_host_port);
  const auto timeout = std::chrono::milliseconds(timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  const auto res = client.Post(target.path_prefix + path, h, body, "application/json");
  if (!res) {
    throw Error(ErrorCode::transport, "POST " + target.scheme_host_port + target.path_prefix + path +
                                          " failed: " + httplib::to_string(res.error()));
  }
  return HttpReply{res->status, res->body};
}

}  // namespace sptw
