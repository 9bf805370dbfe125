// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "sptw/detector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "json.hpp"
#include "sptw/common.hpp"
#include "sptw/http.hpp"

namespace sptw {
namespace {

using nlohmann::json;

bool is_token_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

class LexicalDetector final : public Detector {
public:
  using Detector::Detector;

  std::vector<ScorePair> score_batch(std::span<const SourcePair> pairs) const override {
    std::vector<ScorePair> out;
    out.reserve(pairs.size());
    for (const SourcePair& p : pairs) {
      out.push_back(ScorePair::from_similarity(lexical_similarity(p.a, p.b)));
    }
    return out;
  }
};

/// Shared retry/backoff loop for the HTTP backends.
class RemoteDetector : public Detector {
public:
  explicit RemoteDetector(DetectorHandle handle)
      : Detector(std::move(handle)), target_(parse_http_url(*this->handle().endpoint)) {}

  std::vector<ScorePair> score_batch(std::span<const SourcePair> pairs) const override {
    std::vector<ScorePair> out;
    out.reserve(pairs.size());
    const std::size_t chunk = std::max<std::size_t>(1, handle().batch_size);
    for (std::size_t begin = 0; begin < pairs.size(); begin += chunk) {
      const auto part = pairs.subspan(begin, std::min(chunk, pairs.size() - begin));
      for (const ScorePair& s : score_chunk(part)) out.push_back(s);
    }
    return out;
  }

protected:
  virtual std::vector<ScorePair> score_chunk(std::span<const SourcePair> pairs) const = 0;

  json post(const std::string& path, const json& body) const {
    const std::string payload = body.dump();
    std::string last_error;
    std::int64_t backoff = handle().backoff_ms;
    for (int attempt = 0; attempt <= handle().retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff *= 2;
      }
      try {
        const HttpReply reply = http_post_json(target_, path, payload, handle().timeout_ms);
        if (reply.status != 200) {
          last_error = "HTTP status " + std::to_string(reply.status);
          continue;
        }
        try {
          return json::parse(reply.body);
        } catch (const json::parse_error& e) {
          throw Error(ErrorCode::protocol, "malformed response from " + path + ": " + e.what());
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::transport) throw;
        last_error = e.what();
      }
    }
    throw Error(ErrorCode::scoring, "detector request " + path + " failed after " +
                                        std::to_string(handle().retries) + " retries: " + last_error);
  }

private:
  HttpTarget target_;
};

class EmbeddingDetector final : public RemoteDetector {
public:
  using RemoteDetector::RemoteDetector;

protected:
  std::vector<ScorePair> score_chunk(std::span<const SourcePair> pairs) const override {
    std::vector<std::string> texts;
    std::map<std::string_view, std::size_t> slot;
    auto intern = [&](std::string_view s) {
      const auto [it, inserted] = slot.emplace(s, texts.size());
      if (inserted) texts.emplace_back(s);
      return it->second;
    };
    std::vector<std::pair<std::size_t, std::size_t>> refs;
    for (const SourcePair& p : pairs) refs.emplace_back(intern(p.a), intern(p.b));

    const json reply = post("/embed", json{{"texts", texts}});
    if (!reply.is_object() || !reply.contains("vectors") || !reply["vectors"].is_array() ||
        reply["vectors"].size() != texts.size()) {
      throw Error(ErrorCode::protocol, "embedding response must carry one vector per text");
    }
    std::vector<std::vector<double>> vectors;
    for (const json& v : reply["vectors"]) {
      if (!v.is_array()) throw Error(ErrorCode::protocol, "embedding vector is not an array");
      std::vector<double> vec;
      for (const json& x : v) {
        if (!x.is_number()) throw Error(ErrorCode::protocol, "embedding entry is not a number");
        vec.push_back(x.get<double>());
      }
      if (!vectors.empty() && vec.size() != vectors.front().size()) {
        throw Error(ErrorCode::protocol, "embedding vectors differ in dimension");
      }
      vectors.push_back(std::move(vec));
    }
    std::vector<ScorePair> out;
    for (const auto& [i, j] : refs) {
      out.push_back(ScorePair::from_similarity(std::max(0.0, cosine(vectors[i], vectors[j]))));
    }
    return out;
  }

private:
  static double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  }
};

class PairServiceDetector final : public RemoteDetector {
public:
  using RemoteDetector::RemoteDetector;

protected:
  std::vector<ScorePair> score_chunk(std::span<const SourcePair> pairs) const override {
    json body_pairs = json::array();
    for (const SourcePair& p : pairs) body_pairs.push_back({{"a", p.a}, {"b", p.b}});
    const json reply = post("/score", json{{"pairs", body_pairs}});
    if (!reply.is_object() || !reply.contains("clone_probability") ||
        !reply["clone_probability"].is_array() ||
        reply["clone_probability"].size() != pairs.size()) {
      throw Error(ErrorCode::protocol, "pair service must return one clone_probability per pair");
    }
    std::vector<ScorePair> out;
    for (const json& v : reply["clone_probability"]) {
      if (!v.is_number()) throw Error(ErrorCode::protocol, "clone_probability is not a number");
      const double m = v.get<double>();
      if (!(m >= 0.0 && m <= 1.0)) {
        throw Error(ErrorCode::protocol, "clone_probability outside [0, 1]");
      }
      out.push_back(ScorePair::from_similarity(m));
    }
    return out;
  }
};

}  // namespace

std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::lexical: return "lexical";
    case DetectorKind::embedding_service: return "embedding_service";
    case DetectorKind::pair_service: return "pair_service";
  }
  return "lexical";
}

DetectorKind parse_detector_kind(std::string_view name) {
  if (name == "lexical") return DetectorKind::lexical;
  if (name == "embedding_service") return DetectorKind::embedding_service;
  if (name == "pair_service") return DetectorKind::pair_service;
  throw Error(ErrorCode::config, "unknown detector kind '" + std::string(name) + "'");
}

void DetectorHandle::validate() const {
  if (kind == DetectorKind::lexical && endpoint) {
    throw Error(ErrorCode::config, "lexical detector takes no endpoint");
  }
  if (kind != DetectorKind::lexical && !endpoint) {
    throw Error(ErrorCode::config, std::string(to_string(kind)) + " detector needs an endpoint");
  }
  if (timeout_ms <= 0 || batch_size == 0) {
    throw Error(ErrorCode::config, "detector timeout_ms and batch_size must be positive");
  }
  if (retries < 0) throw Error(ErrorCode::config, "detector retries must be non-negative");
}

ScorePair ScorePair::from_similarity(double m) {
  m = std::clamp(m, 0.0, 1.0);
  return ScorePair{m, 1.0 - m};
}

ScorePair Detector::score(std::string_view x, std::string_view y) const {
  const SourcePair pair{x, y};
  return score_batch(std::span<const SourcePair>(&pair, 1)).front();
}

std::unique_ptr<Detector> make_detector(const DetectorHandle& handle) {
  handle.validate();
  switch (handle.kind) {
    case DetectorKind::lexical: {
      DetectorHandle h = handle;
      h.self_similarity_guaranteed = true;
      return std::make_unique<LexicalDetector>(h);
    }
    case DetectorKind::embedding_service: return std::make_unique<EmbeddingDetector>(handle);
    case DetectorKind::pair_service: return std::make_unique<PairServiceDetector>(handle);
  }
  throw Error(ErrorCode::config, "unknown detector kind");
}

std::set<std::string> lexical_tokens(std::string_view source) {
  std::set<std::string> tokens;
  std::size_t i = 0;
  while (i < source.size()) {
    if (!is_token_char(source[i])) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < source.size() && is_token_char(source[i])) ++i;
    tokens.emplace(source.substr(start, i - start));
  }
  return tokens;
}

double lexical_similarity(std::string_view x, std::string_view y) {
  const auto tx = lexical_tokens(x);
  const auto ty = lexical_tokens(y);
  if (tx.empty() && ty.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& t : tx) common += ty.count(t);
  const std::size_t uni = tx.size() + ty.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

PairLabel classify(const Detector& detector, std::string_view x, std::string_view y,
                   double threshold) {
  return detector.score(x, y).m >= threshold ? PairLabel::clone : PairLabel::nonclone;
}

}  // namespace sptw
