// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sgsrl/reward.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace sgsrl {

std::string to_string(LengthMode mode) {
  switch (mode) {
    case LengthMode::kBatchRelative: return "batch_relative";
    case LengthMode::kRefLen: return "ref_len";
    case LengthMode::kNone: return "none";
  }
  return "none";
}

LengthMode length_mode_from_string(const std::string& name) {
  if (name == "batch_relative") return LengthMode::kBatchRelative;
  if (name == "ref_len") return LengthMode::kRefLen;
  if (name == "none") return LengthMode::kNone;
  throw std::invalid_argument("unknown length_mode: " + name);
}

std::string to_string(MedianScope scope) { return scope == MedianScope::kBatch ? "batch" : "group"; }

MedianScope median_scope_from_string(const std::string& name) {
  if (name == "batch") return MedianScope::kBatch;
  if (name == "group") return MedianScope::kGroup;
  throw std::invalid_argument("unknown median_scope: " + name);
}

void RewardConfig::validate() const {
  auto fraction = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!(len_start_mult > 0.0 && len_start_mult < len_full_mult)) {
    throw std::invalid_argument("reward config: need 0 < len_start_mult < len_full_mult");
  }
  if (lambda_len < 0.0 || lambda_rep < 0.0) throw std::invalid_argument("reward config: negative weight");
  if (!fraction(rep_threshold) || rep_threshold >= 1.0 || !fraction(gate_min_target_frac) ||
      !fraction(gate_max_neutral_frac)) {
    throw std::invalid_argument("reward config: fraction out of range");
  }
  if (rep_ngram == 0) throw std::invalid_argument("reward config: rep_ngram must be >= 1");
  if (!(ref_len_ratio > 0.0) || ref_len_tolerance < 0.0) {
    throw std::invalid_argument("reward config: need ref_len_ratio > 0 and ref_len_tolerance >= 0");
  }
}

bool classify_codepoint(char32_t cp, SymbolClass& out) {
  // Thai block, excluding Thai digits.
  if (cp >= 0x0E00 && cp <= 0x0E7F && !(cp >= 0x0E50 && cp <= 0x0E59)) {
    out = SymbolClass::kTarget;
    return true;
  }
  if ((cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
      (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2FFFF)) {
    out = SymbolClass::kSource;
    return true;
  }
  if ((cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z') ||
      (cp >= 0x00C0 && cp <= 0x024F && cp != 0x00D7 && cp != 0x00F7)) {
    out = SymbolClass::kNeutral;
    return true;
  }
  return false;
}

namespace {

// Lenient UTF-8 decoder: malformed bytes decode to U+FFFD and are skipped by
// the classifier.
std::vector<char32_t> decode_utf8(const std::string& s) {
  std::vector<char32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int extra = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      extra = 1;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      extra = 2;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      extra = 3;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    if (i + extra >= s.size()) {
      out.push_back(0xFFFD);
      break;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

void tally(ClassCounts& counts, SymbolClass cls) {
  switch (cls) {
    case SymbolClass::kTarget: ++counts.target; break;
    case SymbolClass::kSource: ++counts.source; break;
    case SymbolClass::kNeutral: ++counts.neutral; break;
  }
}

}  // namespace

ClassCounts count_classes(const Tokens& candidate, GateUnit unit) {
  ClassCounts counts;
  for (const auto& token : candidate) {
    if (unit == GateUnit::kSymbol) {
      tally(counts, classify_symbol(token));
      continue;
    }
    for (char32_t cp : decode_utf8(token)) {
      SymbolClass cls;
      if (classify_codepoint(cp, cls)) tally(counts, cls);
    }
  }
  return counts;
}

bool language_gate(const Tokens& candidate, const GateRules& rules) {
  const ClassCounts counts = count_classes(candidate, rules.unit);
  const std::size_t total = counts.total();
  if (total == 0 || counts.source > 0) return false;
  const double n = static_cast<double>(total);
  return static_cast<double>(counts.target) / n >= rules.min_target_frac &&
         static_cast<double>(counts.neutral) / n <= rules.max_neutral_frac;
}

double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty list");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

std::vector<double> length_penalties(std::span<const double> lengths, const RewardConfig& cfg) {
  if (lengths.empty()) throw std::invalid_argument("length_penalties: empty batch");
  const double m = median(lengths);
  std::vector<double> out(lengths.size(), 0.0);
  if (m <= 0.0) return out;
  const double start = cfg.len_start_mult * m;
  const double full = cfg.len_full_mult * m;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const double len = lengths[i];
    if (len <= start) {
      out[i] = 0.0;
    } else if (len >= full) {
      out[i] = 1.0;
    } else {
      out[i] = (len - start) / (full - start);
    }
  }
  return out;
}

double repeated_ngram_ratio(const Tokens& candidate, std::size_t n) {
  if (n == 0 || candidate.size() < n) return 0.0;
  const std::size_t occurrences = candidate.size() - n + 1;
  std::unordered_set<std::string> seen;
  std::size_t repeats = 0;
  for (std::size_t i = 0; i < occurrences; ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      key += candidate[i + k];
      key += '\x1f';
    }
    if (!seen.insert(std::move(key)).second) ++repeats;
  }
  return static_cast<double>(repeats) / static_cast<double>(occurrences);
}

double repetition_penalty(const Tokens& candidate, const RewardConfig& cfg) {
  const double ratio = repeated_ngram_ratio(candidate, cfg.rep_ngram);
  return std::clamp((ratio - cfg.rep_threshold) / (1.0 - cfg.rep_threshold), 0.0, 1.0);
}

double ref_length_penalty(double candidate_len, double source_len, const RewardConfig& cfg) {
  if (!(source_len >= 1.0)) throw std::invalid_argument("ref_length_penalty: source_len must be >= 1");
  const double target = cfg.ref_len_ratio * source_len;
  const double excess = std::abs(candidate_len - target) - cfg.ref_len_tolerance * target;
  return std::clamp(excess / target, 0.0, 1.0);
}

std::vector<RewardBreakdown> combine(const RewardBatch& batch, const std::vector<bool>& gates,
                                     std::span<const double> p_lens,
                                     std::span<const double> p_reps, const RewardConfig& cfg) {
  const std::size_t n = batch.sem.size();
  if (gates.size() != n || p_lens.size() != n || p_reps.size() != n) {
    throw std::invalid_argument("combine: input lists differ in length");
  }
  std::vector<RewardBreakdown> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    RewardBreakdown& r = out[i];
    r.gate = gates[i];
    r.sem = batch.sem[i];
    r.p_len = p_lens[i];
    r.p_rep = p_reps[i];
    r.shaped = r.sem - cfg.lambda_len * r.p_len - cfg.lambda_rep * r.p_rep;
    r.final_reward = r.gate ? std::max(r.shaped, 0.0) : 0.0;
  }
  return out;
}

std::vector<RewardBreakdown> shape_rewards(const RewardBatch& batch,
                                           std::span<const double> source_lengths,
                                           std::span<const std::size_t> group_of,
                                           const RewardConfig& cfg, const GateRules& rules) {
  const std::size_t n = batch.sem.size();
  if (batch.candidates.size() != n || batch.lengths.size() != n) {
    throw std::invalid_argument("shape_rewards: batch fields differ in length");
  }
  std::vector<bool> gates(n);
  std::vector<double> p_len(n, 0.0), p_rep(n);
  for (std::size_t i = 0; i < n; ++i) {
    gates[i] = language_gate(batch.candidates[i], rules);
    p_rep[i] = repetition_penalty(batch.candidates[i], cfg);
  }

  switch (cfg.length_mode) {
    case LengthMode::kNone: break;
    case LengthMode::kRefLen:
      if (source_lengths.size() != n) {
        throw std::invalid_argument("shape_rewards: ref_len mode needs one source length per candidate");
      }
      for (std::size_t i = 0; i < n; ++i) {
        p_len[i] = ref_length_penalty(batch.lengths[i], source_lengths[i], cfg);
      }
      break;
    case LengthMode::kBatchRelative:
      if (n == 0) break;
      if (cfg.median_scope == MedianScope::kBatch) {
        // Gate failures still count toward the median.
        p_len = length_penalties(batch.lengths, cfg);
      } else {
        if (group_of.size() != n) {
          throw std::invalid_argument("shape_rewards: group median needs a group id per candidate");
        }
        const std::size_t groups = *std::max_element(group_of.begin(), group_of.end()) + 1;
        std::vector<std::vector<std::size_t>> members(groups);
        for (std::size_t i = 0; i < n; ++i) members[group_of[i]].push_back(i);
        for (const auto& idx : members) {
          if (idx.empty()) continue;
          std::vector<double> lens;
          for (std::size_t i : idx) lens.push_back(batch.lengths[i]);
          const auto pens = length_penalties(lens, cfg);
          for (std::size_t k = 0; k < idx.size(); ++k) p_len[idx[k]] = pens[k];
        }
      }
      break;
  }
  return combine(batch, gates, p_len, p_rep, cfg);
}

}  // namespace sgsrl
