// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Feature-linear autoregressive policy over the output vocabulary plus EOS.
// The next-token logits are
//
//   z = sum_{c in concepts(source)} W_concept[c] + W_prev[previous token or BOS]
//
// which keeps log-probabilities and their gradients exact and cheap.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgsrl/corpus.h"

namespace sgsrl {

using TokenId = std::int32_t;

class ToyPolicy {
 public:
  ToyPolicy() = default;
  // Output vocabulary is the lexicon's target inventory followed by its
  // neutral symbols. Parameters start at zero (uniform next-token distribution).
  ToyPolicy(const Lexicon& lexicon, std::size_t max_len);
  ToyPolicy(std::size_t n_concepts, std::vector<std::string> vocab, std::size_t max_len);

  std::size_t num_concepts() const { return n_concepts_; }
  std::size_t vocab_size() const { return vocab_.size(); }          // excludes EOS
  std::size_t num_outcomes() const { return vocab_.size() + 1; }     // includes EOS
  TokenId eos() const { return static_cast<TokenId>(vocab_.size()); }
  TokenId bos_row() const { return static_cast<TokenId>(vocab_.size() + 1); }
  std::size_t max_len() const { return max_len_; }
  void set_max_len(std::size_t n) { max_len_ = n; }

  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::string& token(TokenId id) const { return vocab_.at(static_cast<std::size_t>(id)); }
  // Throws std::invalid_argument for tokens outside the vocabulary.
  TokenId id_of(const std::string& token) const;
  std::vector<TokenId> ids_of(const Tokens& tokens) const;
  Tokens tokens_of(std::span<const TokenId> ids) const;

  // Flat parameter vector: W_concept rows, then W_prev rows (one per output
  // token, one unused EOS row, and the BOS row).
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t concept_offset(std::size_t concept_index) const { return concept_index * num_outcomes(); }
  std::size_t prev_offset(TokenId prev_row) const {
    return (n_concepts_ + static_cast<std::size_t>(prev_row)) * num_outcomes();
  }
  double& w_concept(std::size_t c, TokenId out) { return params_[concept_offset(c) + out]; }
  double& w_prev(TokenId prev_row, TokenId out) { return params_[prev_offset(prev_row) + out]; }

  // Sum of the concept rows for a source; the per-step logits add one W_prev row.
  std::vector<double> concept_logits(std::span<const std::size_t> concepts) const;
  void step_logits(std::span<const double> base, TokenId prev_row, std::span<double> out) const;

  // 64-bit FNV-1a over shapes and parameter bytes.
  std::uint64_t hash() const;

  bool operator==(const ToyPolicy& o) const {
    return n_concepts_ == o.n_concepts_ && vocab_ == o.vocab_ && max_len_ == o.max_len_ &&
           params_ == o.params_;
  }

 private:
  std::size_t n_concepts_ = 0;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t max_len_ = 64;
  std::vector<double> params_;
};

// In-place numerically stable softmax / log-softmax.
void softmax_inplace(std::span<double> z);
void log_softmax_inplace(std::span<double> z);

std::vector<double> next_token_dist(const ToyPolicy& policy, const SourceDoc& source,
                                    std::span<const TokenId> prefix);
std::vector<double> next_token_dist(const ToyPolicy& policy, const SourceDoc& source,
                                    const Tokens& prefix);

struct Trajectory {
  std::vector<std::size_t> concepts;
  std::vector<TokenId> ids;  // emitted tokens, EOS excluded
  Tokens tokens;
  // One entry per emitted token, plus one for EOS when terminated. Measured at
  // temperature 1 regardless of the sampling temperature.
  std::vector<double> per_token_logprob;
  bool terminated = false;

  std::size_t num_steps() const { return per_token_logprob.size(); }
  // Outcome taken at step t (a token id or EOS).
  TokenId outcome(std::size_t t, TokenId eos) const { return t < ids.size() ? ids[t] : eos; }
};

Trajectory sample(const ToyPolicy& policy, const SourceDoc& source, double temperature,
                  std::uint64_t rng_seed);

Trajectory greedy_decode(const ToyPolicy& policy, const SourceDoc& source);

// log pi(target, EOS | source). Throws std::invalid_argument for OOV tokens.
double sequence_logprob(const ToyPolicy& policy, const SourceDoc& source, const Tokens& target);
double sequence_logprob(const ToyPolicy& policy, std::span<const std::size_t> concepts,
                        std::span<const TokenId> target_ids);

// grad += coef * d/dtheta log pi(target, EOS | concepts)
void add_sequence_logprob_grad(const ToyPolicy& policy, std::span<const std::size_t> concepts,
                               std::span<const TokenId> target_ids, double coef,
                               std::vector<double>& grad);

struct SftConfig {
  std::size_t epochs = 3;
  double learning_rate = 0.4;
  std::size_t batch_size = 2;
};

struct SftResult {
  double initial_nll = 0.0;
  std::vector<double> epoch_nll;  // mean NLL over the corpus after each epoch
};

double mean_nll(const ToyPolicy& policy, std::span<const ParallelPair> pairs);

// Mini-batch gradient descent on the mean negative sequence log-likelihood.
SftResult sft_train(ToyPolicy& policy, std::span<const ParallelPair> pairs, const SftConfig& cfg,
                    std::uint64_t seed);

void save_policy(const std::filesystem::path& path, const ToyPolicy& policy,
                 const std::string& meta_json = "{}");
ToyPolicy load_policy(const std::filesystem::path& path);

}  // namespace sgsrl
