// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Safeguarded semantic reward: hard language gate, batch-relative length
// penalty, repeated n-gram penalty, and their combination
//
//   shaped = sem - lambda_len * p_len - lambda_rep * p_rep
//   final  = gate ? max(shaped, 0) : 0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sgsrl/corpus.h"

namespace sgsrl {

enum class LengthMode { kBatchRelative, kRefLen, kNone };
enum class MedianScope { kBatch, kGroup };

std::string to_string(LengthMode mode);
LengthMode length_mode_from_string(const std::string& name);
std::string to_string(MedianScope scope);
MedianScope median_scope_from_string(const std::string& name);

struct RewardConfig {
  double lambda_len = 0.20;
  double lambda_rep = 0.05;
  double len_start_mult = 2.5;
  double len_full_mult = 5.0;
  std::size_t rep_ngram = 4;
  double rep_threshold = 0.15;
  double gate_min_target_frac = 0.70;
  double gate_max_neutral_frac = 0.10;
  LengthMode length_mode = LengthMode::kBatchRelative;
  MedianScope median_scope = MedianScope::kBatch;
  double ref_len_ratio = 0.5;      // rho
  double ref_len_tolerance = 0.25;  // tau

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

// How the gate splits a candidate into classified units.
enum class GateUnit {
  kSymbol,     // one unit per token, classified by symbol prefix
  kCodepoint,  // UTF-8 text; letters classified by script block, the rest ignored
};

struct GateRules {
  GateUnit unit = GateUnit::kSymbol;
  double min_target_frac = 0.70;
  double max_neutral_frac = 0.10;

  static GateRules from(const RewardConfig& cfg, GateUnit unit = GateUnit::kSymbol) {
    return GateRules{unit, cfg.gate_min_target_frac, cfg.gate_max_neutral_frac};
  }
};

struct ClassCounts {
  std::size_t target = 0;
  std::size_t source = 0;
  std::size_t neutral = 0;
  std::size_t total() const { return target + source + neutral; }
};

// Letter script of a Unicode code point: Thai is target, CJK ideographs are
// source, Latin letters are neutral. Returns false for code points that do not
// count toward the gate fractions (digits, punctuation, spaces, other scripts).
bool classify_codepoint(char32_t cp, SymbolClass& out);

ClassCounts count_classes(const Tokens& candidate, GateUnit unit);

bool language_gate(const Tokens& candidate, const GateRules& rules);

std::vector<double> length_penalties(std::span<const double> lengths, const RewardConfig& cfg);

double median(std::span<const double> values);

// Fraction of n-gram occurrences whose n-gram already appeared earlier.
double repeated_ngram_ratio(const Tokens& candidate, std::size_t n);

double repetition_penalty(const Tokens& candidate, const RewardConfig& cfg);

double ref_length_penalty(double candidate_len, double source_len, const RewardConfig& cfg);

struct RewardBreakdown {
  bool gate = false;
  double sem = 0.0;
  double p_len = 0.0;
  double p_rep = 0.0;
  double shaped = 0.0;
  double final_reward = 0.0;
};

struct RewardBatch {
  std::vector<Tokens> candidates;
  std::vector<double> sem;
  // Lengths in scoring-tokenizer units; token counts for the synthetic world.
  std::vector<double> lengths;
};

std::vector<RewardBreakdown> combine(const RewardBatch& batch, const std::vector<bool>& gates,
                                     std::span<const double> p_lens,
                                     std::span<const double> p_reps, const RewardConfig& cfg);

// Full reward pass over one batch. `source_lengths` is used by the ref_len
// mode; `group_of` maps each candidate to its group for group-scoped medians.
// Both may be empty when the configuration does not need them.
std::vector<RewardBreakdown> shape_rewards(const RewardBatch& batch,
                                           std::span<const double> source_lengths,
                                           std::span<const std::size_t> group_of,
                                           const RewardConfig& cfg, const GateRules& rules);

}  // namespace sgsrl
