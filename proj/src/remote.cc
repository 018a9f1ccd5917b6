// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// HTTP client for an external yes/no reranker.
//
//   POST {"instruction": str, "pairs": [{"query": str, "candidate": str}]}
//   ->   {"judgments": [{"z_yes": num, "z_no": num}]}

#include <chrono>
#include <cmath>
#include <exception>
#include <future>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "sgsrl/errors.h"
#include "sgsrl/scorers.h"

namespace sgsrl {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint parse_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw std::invalid_argument("bad reranker endpoint: " + url);
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

std::vector<double> parse_judgments(const std::string& body, std::size_t expected) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("reranker response is not JSON: ") + e.what(), body);
  }
  if (!doc.is_object() || !doc.contains("judgments") || !doc["judgments"].is_array()) {
    throw ProtocolError("reranker response lacks a judgments array", body);
  }
  const auto& arr = doc["judgments"];
  if (arr.size() != expected) {
    throw ProtocolError("reranker returned " + std::to_string(arr.size()) + " judgments for " +
                            std::to_string(expected) + " pairs",
                        body);
  }
  std::vector<double> scores;
  scores.reserve(expected);
  for (const auto& j : arr) {
    if (!j.is_object() || !j.contains("z_yes") || !j.contains("z_no") || !j["z_yes"].is_number() ||
        !j["z_no"].is_number()) {
      throw ProtocolError("malformed judgment: " + j.dump(), body);
    }
    RerankJudgment judgment{j["z_yes"].get<double>(), j["z_no"].get<double>()};
    if (!std::isfinite(judgment.z_yes) || !std::isfinite(judgment.z_no)) {
      throw ProtocolError("non-finite reranker logit", body);
    }
    scores.push_back(reranker_score(judgment));
  }
  return scores;
}

std::vector<double> post_once(const RemoteRerankerConfig& cfg, const Endpoint& ep,
                              std::span<const TextPair> pairs) {
  json pairs_json = json::array();
  for (const auto& p : pairs) {
    pairs_json.push_back({{"query", join_tokens(p.source)}, {"candidate", join_tokens(p.candidate)}});
  }
  const json body{{"instruction", cfg.instruction}, {"pairs", pairs_json}};

  httplib::Client client(ep.origin);
  const auto timeout = std::chrono::duration<double>(cfg.timeout_seconds);
  const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
  client.set_connection_timeout(sec.count(), usec.count());
  client.set_read_timeout(sec.count(), usec.count());
  client.set_write_timeout(sec.count(), usec.count());

  auto res = client.Post(ep.path, body.dump(), "application/json");
  if (!res) {
    throw TransportError("reranker request failed: " + httplib::to_string(res.error()));
  }
  if (res->status >= 500) {
    throw TransportError("reranker returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw ProtocolError("reranker returned HTTP " + std::to_string(res->status), res->body);
  }
  return parse_judgments(res->body, pairs.size());
}

std::vector<double> post_with_retries(const RemoteRerankerConfig& cfg, const Endpoint& ep,
                                      std::span<const TextPair> pairs) {
  double backoff_ms = cfg.backoff_initial_ms;
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      return post_once(cfg, ep, pairs);
    } catch (const TransportError&) {
      if (attempt >= cfg.retries) throw;
    }
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff_ms));
    backoff_ms *= 2.0;
  }
}

}  // namespace

std::vector<double> remote_rerank_batch(const RemoteRerankerConfig& cfg,
                                        std::span<const TextPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("remote_rerank_batch: no pairs");
  if (cfg.max_pairs_per_request == 0 || cfg.max_in_flight == 0) {
    throw std::invalid_argument("remote_rerank_batch: batch size and max_in_flight must be >= 1");
  }
  const Endpoint ep = parse_endpoint(cfg.endpoint);

  std::vector<std::span<const TextPair>> chunks;
  for (std::size_t start = 0; start < pairs.size(); start += cfg.max_pairs_per_request) {
    chunks.push_back(pairs.subspan(start, std::min(cfg.max_pairs_per_request, pairs.size() - start)));
  }

  std::vector<double> scores;
  scores.reserve(pairs.size());
  // Waves of at most max_in_flight concurrent requests, collected in input order.
  for (std::size_t wave = 0; wave < chunks.size(); wave += cfg.max_in_flight) {
    const std::size_t end = std::min(chunks.size(), wave + cfg.max_in_flight);
    std::vector<std::future<std::vector<double>>> pending;
    for (std::size_t c = wave; c < end; ++c) {
      pending.push_back(std::async(std::launch::async, post_with_retries, std::cref(cfg),
                                   std::cref(ep), chunks[c]));
    }
    std::exception_ptr first_error;
    for (auto& f : pending) {
      try {
        auto part = f.get();
        scores.insert(scores.end(), part.begin(), part.end());
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  }
  return scores;
}

}  // namespace sgsrl
