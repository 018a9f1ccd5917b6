// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "doctest.h"
#include "sgsrl/errors.h"
#include "sgsrl/grpo.h"
#include "sgsrl/rng.h"

using namespace sgsrl;

namespace {

std::vector<std::string> vocab(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(target_symbol(i));
  return v;
}

void randomize(ToyPolicy& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (double& w : p.params()) w = scale * rng.normal();
}

// Two groups of three sampled trajectories from `sampler`, advantages set by hand.
std::vector<GroupSample> toy_groups(const ToyPolicy& sampler, bool terminated_only) {
  std::vector<GroupSample> groups;
  const std::vector<std::vector<std::size_t>> concept_sets{{0, 1}, {1}};
  const std::vector<std::vector<double>> advs{{1.0, -0.5, -0.5}, {-1.2, 0.3, 0.9}};
  std::uint64_t seed = 1;
  for (std::size_t g = 0; g < 2; ++g) {
    GroupSample gs;
    gs.source_index = g;
    while (gs.trajectories.size() < 3) {
      auto t = sample(sampler, SourceDoc{{}, concept_sets[g]}, 1.0, seed++);
      if (terminated_only && !t.terminated) continue;
      gs.trajectories.push_back(std::move(t));
    }
    gs.advantages = advs[g];
    groups.push_back(std::move(gs));
  }
  return groups;
}

}  // namespace

TEST_CASE("group advantages hand values") {
  const std::vector<double> r{1, 2, 3};
  const auto a = group_advantages(r, AdvantageVariant::kGrpo, 1e-6);
  const double sd = std::sqrt(2.0 / 3.0);
  CHECK(std::abs(a[0] + 1.0 / (sd + 1e-6)) < 1e-12);
  CHECK(std::abs(a[1]) < 1e-15);
  CHECK(std::abs(a[2] - 1.0 / (sd + 1e-6)) < 1e-12);
  CHECK(std::abs(a[2] - 1.2247) < 1e-4);

  const auto d = group_advantages(r, AdvantageVariant::kDrGrpo, 1e-6);
  CHECK(d == std::vector<double>{-1.0, 0.0, 1.0});

  const std::vector<double> flat{0.4, 0.4, 0.4};
  for (double x : group_advantages(flat, AdvantageVariant::kGrpo, 1e-6)) CHECK(std::abs(x) < 1e-9);
  CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}, AdvantageVariant::kGrpo, 1e-6),
                  std::invalid_argument);
}

TEST_CASE("categorical KL matches a direct sum") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(9), q(9);
    double sp = 0, sq = 0;
    for (std::size_t k = 0; k < 9; ++k) {
      p[k] = rng.uniform() + 1e-3;
      q[k] = rng.uniform() + 1e-3;
      sp += p[k];
      sq += q[k];
    }
    double oracle = 0.0;
    for (std::size_t k = 0; k < 9; ++k) {
      p[k] /= sp;
      q[k] /= sq;
    }
    for (std::size_t k = 0; k < 9; ++k) oracle += p[k] * std::log(p[k] / q[k]);
    CHECK(std::abs(categorical_kl(p, q) - oracle) < 1e-12);
  }
}

TEST_CASE("trajectory KL equals the mean of per-state KLs") {
  ToyPolicy p(3, vocab(5), 12), q(3, vocab(5), 12);
  randomize(p, 1, 1.0);
  randomize(q, 2, 1.0);
  const SourceDoc src{{}, {0, 1}};
  const auto traj = sample(p, src, 1.0, 4);
  double total = 0.0;
  Tokens prefix;
  for (std::size_t t = 0; t < traj.num_steps(); ++t) {
    total += categorical_kl(next_token_dist(p, src, prefix), next_token_dist(q, src, prefix));
    if (t < traj.tokens.size()) prefix.push_back(traj.tokens[t]);
  }
  CHECK(std::abs(kl_to_reference(p, q, traj) - total / static_cast<double>(traj.num_steps())) < 1e-12);
  CHECK(kl_to_reference(p, p, traj) == 0.0);
}

TEST_CASE("surrogate gradient matches central differences") {
  for (auto variant : {AdvantageVariant::kGrpo, AdvantageVariant::kDrGrpo}) {
    ToyPolicy sampler(3, vocab(4), 10), ref(3, vocab(4), 10);
    randomize(sampler, 21, 0.7);
    randomize(ref, 22, 0.7);
    const auto groups = toy_groups(sampler, false);
    ToyPolicy p = sampler;
    Rng rng(23);
    for (double& w : p.params()) w += 0.05 * rng.normal();  // ratios away from 1

    GrpoConfig cfg;
    cfg.advantage_variant = variant;
    cfg.clip_eps = 10.0;  // keep the objective smooth near p
    cfg.kl_beta = 0.3;
    std::vector<double> grad(p.params().size());
    surrogate_loss(p, ref, groups, cfg, &grad);
    const double h = 1e-5;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.params().size(); ++i) {
      const double w = p.params()[i];
      p.params()[i] = w + h;
      const double up = surrogate_loss(p, ref, groups, cfg, nullptr).loss;
      p.params()[i] = w - h;
      const double down = surrogate_loss(p, ref, groups, cfg, nullptr).loss;
      p.params()[i] = w;
      const double fd = (up - down) / (2 * h);
      num += (fd - grad[i]) * (fd - grad[i]);
      den += fd * fd;
    }
    CHECK(std::sqrt(num / den) < 1e-3);
  }
}

TEST_CASE("clipped tokens carry no surrogate gradient") {
  ToyPolicy sampler(2, vocab(3), 8);
  randomize(sampler, 5, 0.5);
  auto groups = toy_groups(sampler, false);
  ToyPolicy p = sampler;
  for (double& w : p.params()) w *= 4.0;  // far from the sampler
  GrpoConfig cfg;
  cfg.kl_beta = 0.0;
  cfg.clip_eps = 1e-9;
  std::vector<double> grad(p.params().size());
  const auto v = surrogate_loss(p, p, groups, cfg, &grad);
  CHECK(v.clip_fraction > 0.0);
  CHECK(v.clip_fraction <= 1.0);
}

TEST_CASE("without clipping or KL the update is REINFORCE with a baseline") {
  ToyPolicy p(3, vocab(4), 10);
  randomize(p, 31, 0.6);
  const auto groups = toy_groups(p, true);
  GrpoConfig cfg;
  cfg.clip_eps = 1e12;
  cfg.kl_beta = 0.0;
  std::vector<double> grad(p.params().size());
  surrogate_loss(p, p, groups, cfg, &grad);

  // Ascent direction: (1/N) sum_i A_i / T_i * grad log pi(y_i).
  std::vector<double> reinforce(p.params().size(), 0.0);
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
      const auto& t = g.trajectories[i];
      add_sequence_logprob_grad(p, t.concepts, t.ids,
                                g.advantages[i] / static_cast<double>(t.num_steps()) / 6.0, reinforce);
    }
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    num += (grad[i] + reinforce[i]) * (grad[i] + reinforce[i]);
    den += reinforce[i] * reinforce[i];
  }
  CHECK(den > 0.0);
  CHECK(std::sqrt(num / den) < 1e-9);
}

TEST_CASE("zero advantages at the reference leave parameters unchanged") {
  ToyPolicy p(2, vocab(3), 8);
  randomize(p, 8, 1.0);
  auto groups = toy_groups(p, false);
  for (auto& g : groups) std::fill(g.advantages.begin(), g.advantages.end(), 0.0);
  ToyPolicy before = p;
  GrpoConfig cfg;
  const auto stats = policy_update(p, before, groups, cfg);
  CHECK(p == before);
  CHECK(stats.grad_norm == 0.0);
  CHECK(stats.mean_kl_to_ref == 0.0);
}

TEST_CASE("a positive advantage raises that trajectory's log-probability") {
  ToyPolicy p(2, vocab(4), 8);
  randomize(p, 12, 0.5);
  GroupSample g;
  g.trajectories.push_back(sample(p, SourceDoc{{}, {1}}, 1.0, 3));
  g.advantages = {1.0};
  const auto& t = g.trajectories[0];
  const double before = sequence_logprob(p, t.concepts, t.ids);
  GrpoConfig cfg;
  cfg.kl_beta = 0.0;
  cfg.learning_rate = 0.1;
  const ToyPolicy ref = p;
  policy_update(p, ref, std::vector<GroupSample>{g}, cfg);
  CHECK(sequence_logprob(p, t.concepts, t.ids) > before);
}

TEST_CASE("non-finite gradients abort without touching parameters") {
  ToyPolicy p(2, vocab(3), 8);
  randomize(p, 2, 0.5);
  auto groups = toy_groups(p, false);
  groups[0].advantages[0] = NAN;
  const ToyPolicy before = p;
  CHECK_THROWS_AS(policy_update(p, before, groups, GrpoConfig{}), NumericError);
  CHECK(p == before);
}

TEST_CASE("grpo config validation") {
  GrpoConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.group_size = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = GrpoConfig{};
  cfg.clip_eps = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = GrpoConfig{};
  cfg.kl_beta = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("rl_epoch is deterministic and inert at zero learning rate") {
  const Lexicon lex = build_lexicon(42, 10, 2);
  CorpusSpec spec;
  spec.n_parallel = 20;
  spec.m_source = 40;
  spec.n_dev = 10;
  spec.max_len = 5;
  const auto corpus = gen_corpus(lex, spec);
  ToyPolicy sft(lex, 16);
  sft_train(sft, corpus.parallel, SftConfig{2, 0.5, 4}, 1);
  std::vector<RlItem> items;
  for (const auto& d : corpus.source_only) items.push_back({d, std::nullopt});
  OracleScorer scorer(lex);
  RlSetup setup{&scorer, RewardConfig{}, GrpoConfig{}, Anchor::kSource};
  setup.grpo.sources_per_batch = 8;

  ToyPolicy a = sft, b = sft;
  const auto sa = rl_epoch(a, sft, items, setup, 5);
  const auto sb = rl_epoch(b, sft, items, setup, 5);
  CHECK(a == b);
  REQUIRE(sa.size() == 5);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].mean_reward == sb[i].mean_reward);
    CHECK(sa[i].grad_norm == sb[i].grad_norm);
  }
  CHECK_FALSE(a == sft);

  setup.grpo.learning_rate = 0.0;
  ToyPolicy c = sft;
  const auto sc = rl_epoch(c, sft, items, setup, 5);
  CHECK(c == sft);
  CHECK(sc.size() == 5);
  CHECK(sc[0].mean_length > 0.0);

  CHECK_THROWS_AS(rl_epoch(c, sft, std::vector<RlItem>{}, setup, 5), std::invalid_argument);
}
