// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sptw/corpus.hpp"

namespace sptw {

enum class DetectorKind { lexical, embedding_service, pair_service };

std::string_view to_string(DetectorKind kind);
DetectorKind parse_detector_kind(std::string_view name);

struct DetectorHandle {
  DetectorKind kind = DetectorKind::lexical;
  /// Base URL such as "http://127.0.0.1:8080" or "http://host/prefix".
  std::optional<std::string> endpoint;
  std::int64_t timeout_ms = 30000;
  std::size_t batch_size = 32;
  /// Retries after the first failed HTTP attempt; backoff doubles each time.
  int retries = 2;
  std::int64_t backoff_ms = 100;
  /// Whether the backend promises M(x, x) = 1. Always true for lexical.
  bool self_similarity_guaranteed = false;

  void validate() const;
};

/// Clone likelihood m and its distance l = 1 - m.
struct ScorePair {
  double m = 0.0;
  double l = 1.0;

  static ScorePair from_similarity(double m);
};

struct SourcePair {
  std::string_view a;
  std::string_view b;
};

class Detector {
public:
  explicit Detector(DetectorHandle handle) : handle_(std::move(handle)) {}
  virtual ~Detector() = default;

  [[nodiscard]] const DetectorHandle& handle() const { return handle_; }

  ScorePair score(std::string_view x, std::string_view y) const;
  double distance(std::string_view x, std::string_view y) const { return score(x, y).l; }

  /// Element-wise equal to calling score() on each pair. Remote backends send
  /// batch_size pairs per request; any failed chunk aborts the whole call.
  virtual std::vector<ScorePair> score_batch(std::span<const SourcePair> pairs) const = 0;

private:
  DetectorHandle handle_;
};

std::unique_ptr<Detector> make_detector(const DetectorHandle& handle);

/// Maximal runs of [A-Za-z0-9_].
std::set<std::string> lexical_tokens(std::string_view source);

/// Jaccard index of the two token sets; 1 when both are empty.
double lexical_similarity(std::string_view x, std::string_view y);

/// clone iff m >= threshold.
PairLabel classify(const Detector& detector, std::string_view x, std::string_view y,
                   double threshold);

}  // namespace sptw
