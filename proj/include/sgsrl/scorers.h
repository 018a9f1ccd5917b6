// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Semantic reward signals: the yes/no reranker score, the exact coverage
// oracle of the synthetic world, a contrastively trained bag-of-tokens
// embedder, and an HTTP client for an external reranker.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgsrl/corpus.h"

namespace sgsrl {

struct TextPair {
  Tokens source;
  Tokens candidate;
};

class SemanticScorer {
 public:
  virtual ~SemanticScorer() = default;
  // Same length and order as the input; every score in [0, 1].
  virtual std::vector<double> score_batch(std::span<const TextPair> pairs) const = 0;
  virtual std::string name() const = 0;
};

struct RerankJudgment {
  double z_yes = 0.0;
  double z_no = 0.0;
};

// exp(z_yes) / (exp(z_yes) + exp(z_no)). Throws std::invalid_argument on
// non-finite logits.
double reranker_score(const RerankJudgment& j);

// Fraction of the source's concepts whose target lexeme occurs in the candidate.
double oracle_coverage(const SourceDoc& source, const Tokens& candidate, const Lexicon& lexicon);

class OracleScorer final : public SemanticScorer {
 public:
  explicit OracleScorer(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}
  std::vector<double> score_batch(std::span<const TextPair> pairs) const override;
  std::string name() const override { return "oracle"; }

 private:
  Lexicon lexicon_;
};

// ---------------------------------------------------------------------------
// Embedding scorer

struct EmbedderConfig {
  std::size_t dim = 32;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 0.5;
  double temperature = 0.07;
  double init_scale = 0.1;
};

class Embedder {
 public:
  Embedder() = default;
  Embedder(std::vector<std::string> vocab, std::size_t dim, EmbedderConfig cfg = {});

  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const EmbedderConfig& config() const { return cfg_; }
  // Token embedding table, one row of width dim() per vocabulary entry.
  std::vector<double>& table() { return table_; }
  const std::vector<double>& table() const { return table_; }

  // Sparse bag of in-vocabulary token counts; out-of-vocabulary tokens are dropped.
  std::vector<std::pair<std::size_t, double>> bag(const Tokens& text) const;
  // Projection of the bag before normalization.
  std::vector<double> project(const Tokens& text) const;
  // Unit vector, or the zero vector when the text has no in-vocabulary token.
  std::vector<double> embed(const Tokens& text) const;

  bool operator==(const Embedder& o) const {
    return vocab_ == o.vocab_ && dim_ == o.dim_ && table_ == o.table_;
  }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t dim_ = 0;
  EmbedderConfig cfg_;
  std::vector<double> table_;
};

// Randomly initialized embedder over the lexicon's joint vocabulary.
Embedder init_embedder(const Lexicon& lexicon, const EmbedderConfig& cfg, std::uint64_t seed);

struct ContrastiveResult {
  Embedder embedder;
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // full-corpus loss after each epoch
};

// Symmetric in-batch softmax (InfoNCE) loss over a set of matched pairs.
double contrastive_loss(const Embedder& e, std::span<const ParallelPair> batch, double temperature);

// Adds d(contrastive_loss)/d(table) to grad and returns the loss.
double contrastive_loss_grad(const Embedder& e, std::span<const ParallelPair> batch,
                             double temperature, std::vector<double>& grad);

ContrastiveResult train_contrastive(const Lexicon& lexicon, std::span<const ParallelPair> pairs,
                                    const EmbedderConfig& cfg, std::uint64_t seed);

// (1 + cosine) / 2; 0.5 when either side embeds to the zero vector.
double embedding_score(const Embedder& e, const Tokens& source, const Tokens& candidate);

class EmbeddingScorer final : public SemanticScorer {
 public:
  explicit EmbeddingScorer(Embedder e) : embedder_(std::move(e)) {}
  std::vector<double> score_batch(std::span<const TextPair> pairs) const override;
  std::string name() const override { return "embedding"; }
  const Embedder& embedder() const { return embedder_; }

 private:
  Embedder embedder_;
};

void save_embedder(const std::filesystem::path& path, const Embedder& e);
Embedder load_embedder(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Remote reranker

struct RemoteRerankerConfig {
  std::string endpoint = "http://127.0.0.1:8080/rerank";
  std::string instruction =
      "Judge whether the candidate is a faithful target-language title for the source document. "
      "Answer yes or no.";
  double timeout_seconds = 10.0;
  std::size_t max_in_flight = 4;
  std::size_t retries = 3;
  double backoff_initial_ms = 200.0;
  std::size_t max_pairs_per_request = 64;
};

// Order-preserving batched scoring over HTTP. Throws TransportError once
// retries are exhausted and ProtocolError for unusable responses; never
// returns partial results.
std::vector<double> remote_rerank_batch(const RemoteRerankerConfig& cfg,
                                        std::span<const TextPair> pairs);

class RemoteRerankerScorer final : public SemanticScorer {
 public:
  explicit RemoteRerankerScorer(RemoteRerankerConfig cfg) : cfg_(std::move(cfg)) {}
  std::vector<double> score_batch(std::span<const TextPair> pairs) const override {
    return remote_rerank_batch(cfg_, pairs);
  }
  std::string name() const override { return "remote"; }

 private:
  RemoteRerankerConfig cfg_;
};

// ---------------------------------------------------------------------------
// Score discrimination

struct DiscriminationStats {
  std::vector<double> matched_scores;
  std::vector<double> mismatched_scores;
  double p5 = 0.0;   // over all scores
  double p95 = 0.0;
  double separation_auc = 0.0;
};

// P(matched > mismatched) over all cross pairs, ties counted as 0.5.
double separation_auc(std::span<const double> matched, std::span<const double> mismatched);

// Linearly interpolated percentile, q in [0, 100].
double percentile(std::span<const double> values, double q);

DiscriminationStats discrimination_report(const SemanticScorer& scorer,
                                          std::span<const TextPair> matched,
                                          std::span<const TextPair> mismatched);

}  // namespace sgsrl
