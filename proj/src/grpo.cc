// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sgsrl/grpo.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sgsrl/errors.h"
#include "sgsrl/rng.h"

namespace sgsrl {

std::string to_string(AdvantageVariant v) { return v == AdvantageVariant::kGrpo ? "grpo" : "dr_grpo"; }

AdvantageVariant advantage_variant_from_string(const std::string& name) {
  if (name == "grpo") return AdvantageVariant::kGrpo;
  if (name == "dr_grpo") return AdvantageVariant::kDrGrpo;
  throw std::invalid_argument("unknown advantage_variant: " + name);
}

std::string to_string(Anchor a) { return a == Anchor::kSource ? "source" : "target"; }

Anchor anchor_from_string(const std::string& name) {
  if (name == "source") return Anchor::kSource;
  if (name == "target") return Anchor::kTarget;
  throw std::invalid_argument("unknown anchor: " + name);
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("grpo config: group_size must be >= 2");
  if (!(clip_eps > 0.0)) throw std::invalid_argument("grpo config: clip_eps must be > 0");
  if (kl_beta < 0.0) throw std::invalid_argument("grpo config: kl_beta must be >= 0");
  if (!(temperature > 0.0)) throw std::invalid_argument("grpo config: temperature must be > 0");
  if (sources_per_batch == 0) throw std::invalid_argument("grpo config: sources_per_batch must be >= 1");
}

std::vector<double> group_advantages(std::span<const double> rewards, AdvantageVariant variant,
                                     double std_epsilon) {
  if (rewards.size() < 2) throw std::invalid_argument("group_advantages: need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = rewards[i] - mean;
  if (variant == AdvantageVariant::kDrGrpo) return out;
  double var = 0.0;
  for (double d : out) var += d * d;
  const double sd = std::sqrt(var / n);
  for (double& a : out) a /= sd + std_epsilon;
  return out;
}

double categorical_kl(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) kl += p[k] * (std::log(p[k]) - std::log(q[k]));
  }
  return kl;
}

namespace {

// Per-state log distributions of the policy and the reference; the KL uses
// log-space values so that identical parameters give exactly zero.
struct StateLogits {
  std::vector<double> logp, logq;
};

double kl_from_logs(std::span<const double> logp, std::span<const double> logq) {
  double kl = 0.0;
  for (std::size_t k = 0; k < logp.size(); ++k) kl += std::exp(logp[k]) * (logp[k] - logq[k]);
  return std::max(kl, 0.0);
}

}  // namespace

double kl_to_reference(const ToyPolicy& policy, const ToyPolicy& ref, const Trajectory& traj) {
  const std::size_t steps = traj.num_steps();
  if (steps == 0) return 0.0;
  const auto base_p = policy.concept_logits(traj.concepts);
  const auto base_q = ref.concept_logits(traj.concepts);
  std::vector<double> logp(policy.num_outcomes()), logq(ref.num_outcomes());
  double total = 0.0;
  TokenId prev = policy.bos_row();
  for (std::size_t t = 0; t < steps; ++t) {
    policy.step_logits(base_p, prev, logp);
    ref.step_logits(base_q, prev, logq);
    log_softmax_inplace(logp);
    log_softmax_inplace(logq);
    total += kl_from_logs(logp, logq);
    prev = traj.outcome(t, policy.eos());
  }
  return total / static_cast<double>(steps);
}

SurrogateValue surrogate_loss(const ToyPolicy& policy, const ToyPolicy& ref,
                              std::span<const GroupSample> groups, const GrpoConfig& cfg,
                              std::vector<double>* grad) {
  std::size_t n_seq = 0;
  for (const auto& g : groups) {
    if (g.advantages.size() != g.trajectories.size()) {
      throw std::invalid_argument("surrogate_loss: advantages not computed for every trajectory");
    }
    n_seq += g.trajectories.size();
  }
  SurrogateValue value;
  if (n_seq == 0) return value;
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);

  const std::size_t k = policy.num_outcomes();
  const TokenId eos = policy.eos();
  std::vector<double> logp(k), logq(k), dz(k), dz_sum(k);
  std::size_t tokens = 0, clipped = 0;
  double kl_total = 0.0, surr_total = 0.0;

  for (const auto& group : groups) {
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      const Trajectory& traj = group.trajectories[i];
      const double adv = group.advantages[i];
      const std::size_t steps = traj.num_steps();
      if (steps == 0) continue;
      // GRPO averages tokens within a sequence; Dr.GRPO sums them over a constant.
      const double token_weight = cfg.advantage_variant == AdvantageVariant::kGrpo
                                      ? 1.0 / static_cast<double>(steps)
                                      : 1.0 / static_cast<double>(policy.max_len());
      const double seq_weight = 1.0 / static_cast<double>(n_seq);
      const double kl_weight = cfg.kl_beta * seq_weight / static_cast<double>(steps);

      const auto base_p = policy.concept_logits(traj.concepts);
      const auto base_q = ref.concept_logits(traj.concepts);
      std::fill(dz_sum.begin(), dz_sum.end(), 0.0);
      double seq_kl = 0.0;
      TokenId prev = policy.bos_row();
      for (std::size_t t = 0; t < steps; ++t) {
        const TokenId y = traj.outcome(t, eos);
        policy.step_logits(base_p, prev, logp);
        ref.step_logits(base_q, prev, logq);
        log_softmax_inplace(logp);
        log_softmax_inplace(logq);
        const double ratio = std::exp(logp[static_cast<std::size_t>(y)] - traj.per_token_logprob[t]);
        const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        const double unclipped_term = ratio * adv;
        const double clipped_term = clipped_ratio * adv;
        const bool is_clipped = clipped_term < unclipped_term;
        surr_total += seq_weight * token_weight * std::min(unclipped_term, clipped_term);
        ++tokens;
        if (is_clipped) ++clipped;
        const double state_kl = kl_from_logs(logp, logq);
        seq_kl += state_kl;

        if (grad) {
          // d(-w * ratio * A)/dz = -w * A * ratio * (onehot(y) - p)
          const double c_surr = is_clipped ? 0.0 : -seq_weight * token_weight * adv * ratio;
          for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(logp[j]);
            const double onehot = static_cast<TokenId>(j) == y ? 1.0 : 0.0;
            dz[j] = c_surr * (onehot - p) + kl_weight * p * (logp[j] - logq[j] - state_kl);
          }
          double* prow = grad->data() + policy.prev_offset(prev);
          for (std::size_t j = 0; j < k; ++j) {
            prow[j] += dz[j];
            dz_sum[j] += dz[j];
          }
        }
        prev = y;
      }
      if (grad) {
        for (std::size_t c : traj.concepts) {
          double* crow = grad->data() + policy.concept_offset(c);
          for (std::size_t j = 0; j < k; ++j) crow[j] += dz_sum[j];
        }
      }
      kl_total += seq_kl / static_cast<double>(steps);
    }
  }
  value.surrogate = -surr_total;
  value.mean_kl = kl_total / static_cast<double>(n_seq);
  value.loss = value.surrogate + cfg.kl_beta * value.mean_kl;
  value.clip_fraction = tokens ? static_cast<double>(clipped) / static_cast<double>(tokens) : 0.0;
  return value;
}

UpdateStats policy_update(ToyPolicy& policy, const ToyPolicy& ref, std::span<const GroupSample> groups,
                          const GrpoConfig& cfg) {
  UpdateStats stats;
  std::size_t n = 0;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
      stats.mean_length += static_cast<double>(g.trajectories[i].ids.size());
      if (i < g.rewards.size()) {
        stats.mean_reward += g.rewards[i].final_reward;
        stats.mean_sem += g.rewards[i].sem;
        stats.gate_pass_rate += g.rewards[i].gate ? 1.0 : 0.0;
      }
      ++n;
    }
  }
  if (n > 0) {
    stats.mean_length /= static_cast<double>(n);
    stats.mean_reward /= static_cast<double>(n);
    stats.mean_sem /= static_cast<double>(n);
    stats.gate_pass_rate /= static_cast<double>(n);
  }

  std::vector<double> grad(policy.params().size());
  for (std::size_t u = 0; u < std::max<std::size_t>(1, cfg.updates_per_batch); ++u) {
    const SurrogateValue v = surrogate_loss(policy, ref, groups, cfg, &grad);
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("policy_update: non-finite gradient");
    double scale = cfg.learning_rate;
    if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) scale *= cfg.max_grad_norm / norm;
    auto& w = policy.params();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= scale * grad[j];
    if (u == 0) {
      stats.surrogate_loss = v.loss;
      stats.mean_kl_to_ref = v.mean_kl;
      stats.grad_norm = norm;
      stats.clip_fraction = v.clip_fraction;
    } else {
      stats.clip_fraction = std::max(stats.clip_fraction, v.clip_fraction);
    }
  }
  return stats;
}

std::vector<GroupSample> sample_groups(const ToyPolicy& policy, std::span<const RlItem> items,
                                       std::span<const std::size_t> indices, const RlSetup& setup,
                                       std::uint64_t seed) {
  if (!setup.scorer) throw std::invalid_argument("sample_groups: no scorer");
  const std::size_t g_size = setup.grpo.group_size;
  std::vector<GroupSample> groups;
  RewardBatch batch;
  std::vector<TextPair> pairs;
  std::vector<double> source_lengths;
  std::vector<std::size_t> group_of;
  for (std::size_t gi = 0; gi < indices.size(); ++gi) {
    const std::size_t idx = indices[gi];
    const RlItem& item = items[idx];
    const Tokens* anchor = &item.source.tokens;
    if (setup.anchor == Anchor::kTarget) {
      if (!item.reference) throw std::invalid_argument("target-anchored scoring needs a reference");
      anchor = &*item.reference;
    }
    GroupSample group;
    group.source_index = idx;
    for (std::size_t g = 0; g < g_size; ++g) {
      Trajectory traj = sample(policy, item.source, setup.grpo.temperature, mix_seed(seed, idx * 1009 + g));
      pairs.push_back({*anchor, traj.tokens});
      batch.candidates.push_back(traj.tokens);
      batch.lengths.push_back(static_cast<double>(traj.tokens.size()));
      source_lengths.push_back(static_cast<double>(item.source.tokens.size()));
      group_of.push_back(gi);
      group.trajectories.push_back(std::move(traj));
    }
    groups.push_back(std::move(group));
  }
  if (pairs.empty()) return groups;
  batch.sem = setup.scorer->score_batch(pairs);
  const auto rewards = shape_rewards(batch, source_lengths, group_of, setup.reward,
                                     GateRules::from(setup.reward));
  std::vector<double> r(g_size);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto& group = groups[gi];
    group.rewards.assign(rewards.begin() + static_cast<std::ptrdiff_t>(gi * g_size),
                         rewards.begin() + static_cast<std::ptrdiff_t>((gi + 1) * g_size));
    for (std::size_t g = 0; g < g_size; ++g) r[g] = group.rewards[g].final_reward;
    group.advantages = group_advantages(r, setup.grpo.advantage_variant, setup.grpo.std_epsilon);
  }
  return groups;
}

std::vector<UpdateStats> rl_epoch(ToyPolicy& policy, const ToyPolicy& ref, std::span<const RlItem> items,
                                  const RlSetup& setup, std::uint64_t seed) {
  if (items.empty()) throw std::invalid_argument("rl_epoch: empty source corpus");
  setup.grpo.validate();
  setup.reward.validate();
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x41));
  rng.shuffle(order);

  std::vector<UpdateStats> stats;
  const std::size_t per_batch = setup.grpo.sources_per_batch;
  for (std::size_t start = 0, b = 0; start < order.size(); start += per_batch, ++b) {
    const std::size_t end = std::min(order.size(), start + per_batch);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    const auto groups = sample_groups(policy, items, idx, setup, mix_seed(seed, 0x1000 + b));
    stats.push_back(policy_update(policy, ref, groups, setup.grpo));
  }
  return stats;
}

}  // namespace sgsrl
