// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace sptw {

enum class ErrorCode {
  parse,
  conflict,
  invariant,
  bounds,
  environment,
  registry,
  scoring,
  protocol,
  transport,
  cassette_miss,
  design_parse,
  domain,
  degenerate,
  cap_exceeded,
  config,
  usage,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a code so the CLI can map it to
/// an exit status without string matching.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Derives an independent 64-bit stream seed from a root seed and a purpose
/// label, so that each consumer of randomness gets its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose);

std::string trim(std::string_view s);
/// Splits on newlines, dropping a trailing carriage return from each line.
/// Text ending in a newline yields no final empty line.
std::vector<std::string> split_lines(std::string_view s);

/// Replaces every occurrence of `placeholder` in each argv element.
std::vector<std::string> substitute_argv(const std::vector<std::string>& argv,
                                         std::string_view placeholder,
                                         std::string_view value);

unsigned default_worker_count();

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
/// thrown by any task is rethrown after all threads join; remaining indices
/// are skipped once a failure is seen.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
      }
    }
  };
  {
    std::vector<std::jthread> threads;
    const std::size_t count = std::min<std::size_t>(workers, n);
    threads.reserve(count);
    for (std::size_t t = 0; t < count; ++t) threads.emplace_back(body);
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace sptw
