// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sgsrl/scorers.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

#include "sgsrl/errors.h"
#include "sgsrl/rng.h"

namespace sgsrl {

using nlohmann::json;

double reranker_score(const RerankJudgment& j) {
  if (!std::isfinite(j.z_yes) || !std::isfinite(j.z_no)) {
    throw std::invalid_argument("reranker_score: non-finite logit");
  }
  // Shift by the larger logit so neither exponential overflows.
  const double m = std::max(j.z_yes, j.z_no);
  const double e_yes = std::exp(j.z_yes - m);
  const double e_no = std::exp(j.z_no - m);
  return e_yes / (e_yes + e_no);
}

double oracle_coverage(const SourceDoc& source, const Tokens& candidate, const Lexicon& lexicon) {
  if (source.concepts.empty()) return 0.0;
  std::unordered_set<std::string> present(candidate.begin(), candidate.end());
  std::size_t hit = 0;
  for (std::size_t c : source.concepts) {
    if (present.count(lexicon.target_lexeme(c))) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(source.concepts.size());
}

std::vector<double> OracleScorer::score_batch(std::span<const TextPair> pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back(oracle_coverage(make_source_doc(p.source, lexicon_), p.candidate, lexicon_));
  }
  return out;
}

// ---------------------------------------------------------------------------

Embedder::Embedder(std::vector<std::string> vocab, std::size_t dim, EmbedderConfig cfg)
    : vocab_(std::move(vocab)), dim_(dim), cfg_(cfg), table_(vocab_.size() * dim, 0.0) {
  if (dim_ == 0) throw std::invalid_argument("Embedder: dim must be >= 1");
  for (std::size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], i);
}

std::vector<std::pair<std::size_t, double>> Embedder::bag(const Tokens& text) const {
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& t : text) {
    auto it = index_.find(t);
    if (it == index_.end()) continue;
    auto pos = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == it->second; });
    if (pos == out.end()) {
      out.emplace_back(it->second, 1.0);
    } else {
      pos->second += 1.0;
    }
  }
  return out;
}

std::vector<double> Embedder::project(const Tokens& text) const {
  std::vector<double> h(dim_, 0.0);
  for (const auto& [idx, count] : bag(text)) {
    const double* row = table_.data() + idx * dim_;
    for (std::size_t k = 0; k < dim_; ++k) h[k] += count * row[k];
  }
  return h;
}

std::vector<double> Embedder::embed(const Tokens& text) const {
  auto h = project(text);
  const double norm = std::sqrt(std::inner_product(h.begin(), h.end(), h.begin(), 0.0));
  if (norm == 0.0) return h;
  for (double& v : h) v /= norm;
  return h;
}

Embedder init_embedder(const Lexicon& lexicon, const EmbedderConfig& cfg, std::uint64_t seed) {
  Embedder e(lexicon.joint_vocabulary(), cfg.dim, cfg);
  Rng rng(mix_seed(seed, 0xe3b));
  for (double& w : e.table()) w = cfg.init_scale * rng.normal();
  return e;
}

namespace {

struct Encoded {
  std::vector<std::pair<std::size_t, double>> bag;
  std::vector<double> unit;
  double norm = 0.0;
};

Encoded encode(const Embedder& e, const Tokens& text) {
  Encoded out;
  out.bag = e.bag(text);
  out.unit = e.project(text);
  out.norm = std::sqrt(std::inner_product(out.unit.begin(), out.unit.end(), out.unit.begin(), 0.0));
  if (out.norm > 0.0) {
    for (double& v : out.unit) v /= out.norm;
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Backpropagates dL/d(unit) through normalization and the bag projection.
void backprop(const Encoded& enc, std::span<const double> g_unit, std::size_t dim,
              std::vector<double>& grad) {
  if (enc.norm == 0.0) return;
  const double proj = dot(enc.unit, g_unit);
  std::vector<double> g_h(dim);
  for (std::size_t k = 0; k < dim; ++k) g_h[k] = (g_unit[k] - enc.unit[k] * proj) / enc.norm;
  for (const auto& [idx, count] : enc.bag) {
    double* row = grad.data() + idx * dim;
    for (std::size_t k = 0; k < dim; ++k) row[k] += count * g_h[k];
  }
}

double loss_and_maybe_grad(const Embedder& e, std::span<const ParallelPair> batch, double temperature,
                           std::vector<double>* grad) {
  const std::size_t b = batch.size();
  if (b < 2) throw std::invalid_argument("contrastive loss needs at least 2 pairs");
  const std::size_t d = e.dim();
  std::vector<Encoded> src, tgt;
  for (const auto& p : batch) {
    src.push_back(encode(e, p.source.tokens));
    tgt.push_back(encode(e, p.target));
  }
  std::vector<double> s(b * b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) s[i * b + j] = dot(src[i].unit, tgt[j].unit) / temperature;
  }
  // Row softmax (source -> targets) and column softmax (target -> sources).
  std::vector<double> row_p(b * b), col_p(b * b);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    std::span<double> r(row_p.data() + i * b, b);
    std::copy(s.begin() + i * b, s.begin() + (i + 1) * b, r.begin());
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double& v : r) z += std::exp(v - m);
    const double lse = m + std::log(z);
    loss += lse - s[i * b + i];
    for (std::size_t j = 0; j < b; ++j) r[j] = std::exp(s[i * b + j] - lse);
  }
  for (std::size_t j = 0; j < b; ++j) {
    double m = -INFINITY;
    for (std::size_t i = 0; i < b; ++i) m = std::max(m, s[i * b + j]);
    double z = 0.0;
    for (std::size_t i = 0; i < b; ++i) z += std::exp(s[i * b + j] - m);
    const double lse = m + std::log(z);
    loss += lse - s[j * b + j];
    for (std::size_t i = 0; i < b; ++i) col_p[i * b + j] = std::exp(s[i * b + j] - lse);
  }
  const double norm = 1.0 / (2.0 * static_cast<double>(b));
  loss *= norm;
  if (!grad) return loss;

  std::vector<std::vector<double>> g_src(b, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> g_tgt(b, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double delta = i == j ? 1.0 : 0.0;
      const double ds = norm * ((row_p[i * b + j] - delta) + (col_p[i * b + j] - delta)) / temperature;
      if (ds == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) {
        g_src[i][k] += ds * tgt[j].unit[k];
        g_tgt[j][k] += ds * src[i].unit[k];
      }
    }
  }
  for (std::size_t i = 0; i < b; ++i) {
    backprop(src[i], g_src[i], d, *grad);
    backprop(tgt[i], g_tgt[i], d, *grad);
  }
  return loss;
}

double corpus_loss(const Embedder& e, std::span<const ParallelPair> pairs, std::size_t batch_size,
                   double temperature) {
  // Fixed, unshuffled batching so the reported curve is comparable across epochs.
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start + 1 < pairs.size(); start += batch_size) {
    const std::size_t end = std::min(pairs.size(), start + batch_size);
    if (end - start < 2) break;
    total += loss_and_maybe_grad(e, pairs.subspan(start, end - start), temperature, nullptr);
    ++batches;
  }
  return total / static_cast<double>(batches);
}

}  // namespace

double contrastive_loss(const Embedder& e, std::span<const ParallelPair> batch, double temperature) {
  return loss_and_maybe_grad(e, batch, temperature, nullptr);
}

double contrastive_loss_grad(const Embedder& e, std::span<const ParallelPair> batch,
                             double temperature, std::vector<double>& grad) {
  return loss_and_maybe_grad(e, batch, temperature, &grad);
}

ContrastiveResult train_contrastive(const Lexicon& lexicon, std::span<const ParallelPair> pairs,
                                    const EmbedderConfig& cfg, std::uint64_t seed) {
  if (pairs.size() < 2) throw std::invalid_argument("train_contrastive: need at least 2 pairs");
  if (cfg.batch_size < 2) throw std::invalid_argument("train_contrastive: batch_size must be >= 2");
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("train_contrastive: temperature must be > 0");

  ContrastiveResult result{init_embedder(lexicon, cfg, seed), 0.0, {}};
  Embedder& e = result.embedder;
  result.initial_loss = corpus_loss(e, pairs, cfg.batch_size, cfg.temperature);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(e.table().size());
  std::vector<ParallelPair> batch;
  Rng rng(mix_seed(seed, 0xc07));
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;  // a trailing singleton has no in-batch negative
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(pairs[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0);
      loss_and_maybe_grad(e, batch, cfg.temperature, &grad);
      auto& w = e.table();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= cfg.learning_rate * grad[k];
    }
    result.epoch_loss.push_back(corpus_loss(e, pairs, cfg.batch_size, cfg.temperature));
  }
  return result;
}

double embedding_score(const Embedder& e, const Tokens& source, const Tokens& candidate) {
  const auto a = e.embed(source);
  const auto b = e.embed(candidate);
  const double cos = std::clamp(dot(a, b), -1.0, 1.0);
  return (1.0 + cos) / 2.0;
}

std::vector<double> EmbeddingScorer::score_batch(std::span<const TextPair> pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(embedding_score(embedder_, p.source, p.candidate));
  return out;
}

void save_embedder(const std::filesystem::path& path, const Embedder& e) {
  const auto& c = e.config();
  json doc{{"format", "sgsrl.embedder.v1"},
           {"dim", e.dim()},
           {"vocab", e.vocab()},
           {"table", e.table()},
           {"config",
            {{"dim", c.dim},
             {"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"learning_rate", c.learning_rate},
             {"temperature", c.temperature},
             {"init_scale", c.init_scale}}}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump() << '\n';
}

Embedder load_embedder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("embedder not found: " + path.string());
  const json doc = json::parse(in);
  if (doc.value("format", "") != "sgsrl.embedder.v1") {
    throw std::runtime_error(path.string() + ": not an embedder file");
  }
  EmbedderConfig cfg;
  const auto& c = doc.at("config");
  cfg.dim = c.at("dim").get<std::size_t>();
  cfg.epochs = c.at("epochs").get<std::size_t>();
  cfg.batch_size = c.at("batch_size").get<std::size_t>();
  cfg.learning_rate = c.at("learning_rate").get<double>();
  cfg.temperature = c.at("temperature").get<double>();
  cfg.init_scale = c.at("init_scale").get<double>();
  Embedder e(doc.at("vocab").get<std::vector<std::string>>(), doc.at("dim").get<std::size_t>(), cfg);
  auto table = doc.at("table").get<std::vector<double>>();
  if (table.size() != e.table().size()) throw std::runtime_error(path.string() + ": table shape mismatch");
  e.table() = std::move(table);
  return e;
}

// ---------------------------------------------------------------------------

double separation_auc(std::span<const double> matched, std::span<const double> mismatched) {
  if (matched.empty() || mismatched.empty()) {
    throw std::invalid_argument("separation_auc: both score sets must be non-empty");
  }
  double wins = 0.0;
  for (double m : matched) {
    for (double n : mismatched) {
      if (m > n) {
        wins += 1.0;
      } else if (m == n) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(matched.size()) * static_cast<double>(mismatched.size()));
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

DiscriminationStats discrimination_report(const SemanticScorer& scorer,
                                          std::span<const TextPair> matched,
                                          std::span<const TextPair> mismatched) {
  if (matched.empty() || mismatched.empty()) {
    throw std::invalid_argument("discrimination_report: both pair sets must be non-empty");
  }
  DiscriminationStats stats;
  stats.matched_scores = scorer.score_batch(matched);
  stats.mismatched_scores = scorer.score_batch(mismatched);
  std::vector<double> all = stats.matched_scores;
  all.insert(all.end(), stats.mismatched_scores.begin(), stats.mismatched_scores.end());
  stats.p5 = percentile(all, 5.0);
  stats.p95 = percentile(all, 95.0);
  stats.separation_auc = separation_auc(stats.matched_scores, stats.mismatched_scores);
  return stats;
}

}  // namespace sgsrl
