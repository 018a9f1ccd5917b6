// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Group-relative policy optimization with a clipped surrogate and an exact
// categorical KL penalty toward a frozen reference policy.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgsrl/policy.h"
#include "sgsrl/reward.h"
#include "sgsrl/scorers.h"

namespace sgsrl {

enum class AdvantageVariant { kGrpo, kDrGrpo };

std::string to_string(AdvantageVariant v);
AdvantageVariant advantage_variant_from_string(const std::string& name);

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip_eps = 0.2;
  double kl_beta = 0.02;
  double learning_rate = 0.1;
  AdvantageVariant advantage_variant = AdvantageVariant::kGrpo;
  double std_epsilon = 1e-6;
  std::size_t updates_per_batch = 1;
  double temperature = 1.0;
  std::size_t sources_per_batch = 16;
  double max_grad_norm = 0.0;  // 0 disables clipping

  void validate() const;
};

struct GroupSample {
  std::size_t source_index = 0;
  std::vector<Trajectory> trajectories;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;
};

struct UpdateStats {
  double surrogate_loss = 0.0;
  double mean_kl_to_ref = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
  double mean_reward = 0.0;
  double mean_length = 0.0;
  double mean_sem = 0.0;
  double gate_pass_rate = 0.0;
};

// grpo: (r - mean) / (std + eps) with population std; dr_grpo: r - mean.
std::vector<double> group_advantages(std::span<const double> rewards, AdvantageVariant variant,
                                     double std_epsilon);

// sum_k p_k log(p_k / q_k) over a full categorical distribution.
double categorical_kl(std::span<const double> p, std::span<const double> q);

// Mean over the trajectory's decoding states of KL(policy || reference).
double kl_to_reference(const ToyPolicy& policy, const ToyPolicy& ref, const Trajectory& traj);

struct SurrogateValue {
  double loss = 0.0;
  double surrogate = 0.0;  // the clipped-objective part of the loss
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
};

// Value of the training loss for the given groups; when `grad` is non-null,
// also writes dL/dtheta into it (same layout as policy.params()).
SurrogateValue surrogate_loss(const ToyPolicy& policy, const ToyPolicy& ref,
                              std::span<const GroupSample> groups, const GrpoConfig& cfg,
                              std::vector<double>* grad);

// Runs cfg.updates_per_batch gradient steps on the batch. Throws NumericError
// (parameters untouched by the failing step) on a non-finite gradient.
UpdateStats policy_update(ToyPolicy& policy, const ToyPolicy& ref, std::span<const GroupSample> groups,
                          const GrpoConfig& cfg);

enum class Anchor { kSource, kTarget };

std::string to_string(Anchor a);
Anchor anchor_from_string(const std::string& name);

struct RlItem {
  SourceDoc source;
  std::optional<Tokens> reference;  // required when scoring is target-anchored
};

struct RlSetup {
  const SemanticScorer* scorer = nullptr;
  RewardConfig reward;
  GrpoConfig grpo;
  Anchor anchor = Anchor::kSource;
};

// Samples and scores one group per source; advantages are filled in.
std::vector<GroupSample> sample_groups(const ToyPolicy& policy, std::span<const RlItem> items,
                                       std::span<const std::size_t> indices, const RlSetup& setup,
                                       std::uint64_t seed);

// One pass over the items in seeded random order.
std::vector<UpdateStats> rl_epoch(ToyPolicy& policy, const ToyPolicy& ref, std::span<const RlItem> items,
                                  const RlSetup& setup, std::uint64_t seed);

}  // namespace sgsrl
