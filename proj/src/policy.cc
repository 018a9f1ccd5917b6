// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sgsrl/policy.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "sgsrl/errors.h"
#include "sgsrl/rng.h"

namespace sgsrl {

using nlohmann::json;

ToyPolicy::ToyPolicy(const Lexicon& lexicon, std::size_t max_len)
    : ToyPolicy(lexicon.num_concepts(),
                [&] {
                  // t0..t{n-1} in symbol order, then neutrals.
                  std::vector<std::string> v;
                  for (std::size_t k = 0; k < lexicon.num_concepts(); ++k) v.push_back(target_symbol(k));
                  for (const auto& n : lexicon.neutral_symbols()) v.push_back(n);
                  return v;
                }(),
                max_len) {}

ToyPolicy::ToyPolicy(std::size_t n_concepts, std::vector<std::string> vocab, std::size_t max_len)
    : n_concepts_(n_concepts), vocab_(std::move(vocab)), max_len_(max_len) {
  if (max_len_ == 0) throw std::invalid_argument("ToyPolicy: max_len must be >= 1");
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("ToyPolicy: duplicate vocabulary entry " + vocab_[i]);
    }
  }
  params_.assign((n_concepts_ + vocab_.size() + 2) * num_outcomes(), 0.0);
}

TokenId ToyPolicy::id_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw std::invalid_argument("token not in policy vocabulary: " + token);
  return it->second;
}

std::vector<TokenId> ToyPolicy::ids_of(const Tokens& tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id_of(t));
  return out;
}

Tokens ToyPolicy::tokens_of(std::span<const TokenId> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(token(id));
  return out;
}

std::vector<double> ToyPolicy::concept_logits(std::span<const std::size_t> concepts) const {
  const std::size_t k = num_outcomes();
  std::vector<double> base(k, 0.0);
  for (std::size_t c : concepts) {
    if (c >= n_concepts_) throw std::invalid_argument("concept index out of range");
    const double* row = params_.data() + concept_offset(c);
    for (std::size_t j = 0; j < k; ++j) base[j] += row[j];
  }
  return base;
}

void ToyPolicy::step_logits(std::span<const double> base, TokenId prev_row, std::span<double> out) const {
  const double* row = params_.data() + prev_offset(prev_row);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = base[j] + row[j];
}

std::uint64_t ToyPolicy::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t shape[3] = {n_concepts_, vocab_.size(), max_len_};
  feed(shape, sizeof(shape));
  for (const auto& t : vocab_) feed(t.data(), t.size() + 1);
  feed(params_.data(), params_.size() * sizeof(double));
  return h;
}

void softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

void log_softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  for (double& v : z) v -= lse;
}

std::vector<double> next_token_dist(const ToyPolicy& policy, const SourceDoc& source,
                                    std::span<const TokenId> prefix) {
  for (TokenId id : prefix) {
    if (id < 0 || id >= policy.eos()) throw std::invalid_argument("prefix token out of vocabulary");
  }
  const auto base = policy.concept_logits(source.concepts);
  std::vector<double> z(policy.num_outcomes());
  policy.step_logits(base, prefix.empty() ? policy.bos_row() : prefix.back(), z);
  softmax_inplace(z);
  return z;
}

std::vector<double> next_token_dist(const ToyPolicy& policy, const SourceDoc& source,
                                    const Tokens& prefix) {
  const auto ids = policy.ids_of(prefix);
  return next_token_dist(policy, source, ids);
}

namespace {

TokenId draw(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    acc += probs[j];
    if (u < acc) return static_cast<TokenId>(j);
  }
  // Rounding left u above the final partial sum; take the last non-zero entry.
  for (std::size_t j = probs.size(); j-- > 0;) {
    if (probs[j] > 0.0) return static_cast<TokenId>(j);
  }
  return static_cast<TokenId>(probs.size() - 1);
}

template <typename Pick>
Trajectory decode(const ToyPolicy& policy, const SourceDoc& source, Pick&& pick) {
  Trajectory traj;
  traj.concepts = source.concepts;
  const auto base = policy.concept_logits(source.concepts);
  std::vector<double> z(policy.num_outcomes()), logp(policy.num_outcomes());
  TokenId prev = policy.bos_row();
  for (std::size_t t = 0; t < policy.max_len(); ++t) {
    policy.step_logits(base, prev, z);
    std::copy(z.begin(), z.end(), logp.begin());
    log_softmax_inplace(logp);
    const TokenId y = pick(z);
    traj.per_token_logprob.push_back(logp[static_cast<std::size_t>(y)]);
    if (y == policy.eos()) {
      traj.terminated = true;
      break;
    }
    traj.ids.push_back(y);
    prev = y;
  }
  traj.tokens = policy.tokens_of(traj.ids);
  return traj;
}

}  // namespace

Trajectory sample(const ToyPolicy& policy, const SourceDoc& source, double temperature,
                  std::uint64_t rng_seed) {
  if (!(temperature > 0.0)) throw std::invalid_argument("sample: temperature must be > 0");
  Rng rng(rng_seed);
  std::vector<double> scaled(policy.num_outcomes());
  return decode(policy, source, [&](std::span<const double> z) {
    for (std::size_t j = 0; j < z.size(); ++j) scaled[j] = z[j] / temperature;
    softmax_inplace(scaled);
    return draw(scaled, rng.uniform());
  });
}

Trajectory greedy_decode(const ToyPolicy& policy, const SourceDoc& source) {
  return decode(policy, source, [](std::span<const double> z) {
    return static_cast<TokenId>(std::max_element(z.begin(), z.end()) - z.begin());
  });
}

double sequence_logprob(const ToyPolicy& policy, std::span<const std::size_t> concepts,
                        std::span<const TokenId> target_ids) {
  const auto base = policy.concept_logits(concepts);
  std::vector<double> z(policy.num_outcomes());
  double total = 0.0;
  TokenId prev = policy.bos_row();
  for (std::size_t t = 0; t <= target_ids.size(); ++t) {
    const TokenId y = t < target_ids.size() ? target_ids[t] : policy.eos();
    if (y < 0 || y > policy.eos() || (t < target_ids.size() && y == policy.eos())) {
      throw std::invalid_argument("sequence_logprob: token out of vocabulary");
    }
    policy.step_logits(base, prev, z);
    log_softmax_inplace(z);
    total += z[static_cast<std::size_t>(y)];
    prev = y;
  }
  return total;
}

double sequence_logprob(const ToyPolicy& policy, const SourceDoc& source, const Tokens& target) {
  const auto ids = policy.ids_of(target);
  return sequence_logprob(policy, source.concepts, ids);
}

void add_sequence_logprob_grad(const ToyPolicy& policy, std::span<const std::size_t> concepts,
                               std::span<const TokenId> target_ids, double coef,
                               std::vector<double>& grad) {
  const std::size_t k = policy.num_outcomes();
  const auto base = policy.concept_logits(concepts);
  std::vector<double> p(k), dz_sum(k, 0.0);
  TokenId prev = policy.bos_row();
  for (std::size_t t = 0; t <= target_ids.size(); ++t) {
    const TokenId y = t < target_ids.size() ? target_ids[t] : policy.eos();
    policy.step_logits(base, prev, p);
    softmax_inplace(p);
    // d log p_y / dz = onehot(y) - p
    double* prow = grad.data() + policy.prev_offset(prev);
    for (std::size_t j = 0; j < k; ++j) {
      const double d = coef * ((static_cast<TokenId>(j) == y ? 1.0 : 0.0) - p[j]);
      prow[j] += d;
      dz_sum[j] += d;
    }
    prev = y;
  }
  for (std::size_t c : concepts) {
    double* crow = grad.data() + policy.concept_offset(c);
    for (std::size_t j = 0; j < k; ++j) crow[j] += dz_sum[j];
  }
}

double mean_nll(const ToyPolicy& policy, std::span<const ParallelPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("mean_nll: empty corpus");
  double total = 0.0;
  for (const auto& p : pairs) total -= sequence_logprob(policy, p.source, p.target);
  return total / static_cast<double>(pairs.size());
}

SftResult sft_train(ToyPolicy& policy, std::span<const ParallelPair> pairs, const SftConfig& cfg,
                    std::uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("sft_train: empty corpus");
  if (cfg.batch_size == 0) throw std::invalid_argument("sft_train: batch_size must be >= 1");

  std::vector<std::vector<TokenId>> targets;
  targets.reserve(pairs.size());
  for (const auto& p : pairs) targets.push_back(policy.ids_of(p.target));

  SftResult result;
  result.initial_nll = mean_nll(policy, pairs);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(policy.params().size());
  Rng rng(mix_seed(seed, 0x5f7));

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& pair = pairs[order[i]];
        add_sequence_logprob_grad(policy, pair.source.concepts, targets[order[i]], scale, grad);
      }
      // Ascent on log-likelihood == descent on NLL.
      auto& w = policy.params();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] += cfg.learning_rate * grad[j];
    }
    result.epoch_nll.push_back(mean_nll(policy, pairs));
  }
  return result;
}

void save_policy(const std::filesystem::path& path, const ToyPolicy& policy,
                 const std::string& meta_json) {
  const std::size_t k = policy.num_outcomes();
  const auto& w = policy.params();
  auto rows = [&](std::size_t first_row, std::size_t n_rows) {
    json out = json::array();
    for (std::size_t r = 0; r < n_rows; ++r) {
      const auto begin = w.begin() + static_cast<std::ptrdiff_t>((first_row + r) * k);
      out.push_back(std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(k)));
    }
    return out;
  };
  json doc{{"format", "sgsrl.policy.v1"},
           {"n_concepts", policy.num_concepts()},
           {"vocab", policy.vocab()},
           {"eos_index", policy.eos()},
           {"bos_row", policy.bos_row()},
           {"max_len", policy.max_len()},
           {"w_concept", rows(0, policy.num_concepts())},
           {"w_prev", rows(policy.num_concepts(), policy.vocab_size() + 2)},
           {"hash", policy.hash()},
           {"meta", json::parse(meta_json)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump() << '\n';
}

ToyPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint not found: " + path.string());
  const json doc = json::parse(in);
  if (doc.value("format", "") != "sgsrl.policy.v1") {
    throw std::runtime_error(path.string() + ": not a policy checkpoint");
  }
  ToyPolicy policy(doc.at("n_concepts").get<std::size_t>(),
                   doc.at("vocab").get<std::vector<std::string>>(), doc.at("max_len").get<std::size_t>());
  auto& w = policy.params();
  std::size_t pos = 0;
  for (const char* block : {"w_concept", "w_prev"}) {
    for (const auto& row : doc.at(block)) {
      const auto values = row.get<std::vector<double>>();
      if (values.size() != policy.num_outcomes() || pos + values.size() > w.size()) {
        throw std::runtime_error(path.string() + ": parameter shape mismatch");
      }
      std::copy(values.begin(), values.end(), w.begin() + static_cast<std::ptrdiff_t>(pos));
      pos += values.size();
    }
  }
  if (pos != w.size()) throw std::runtime_error(path.string() + ": parameter shape mismatch");
  return policy;
}

}  // namespace sgsrl
