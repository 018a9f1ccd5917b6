// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Randomized invariants, 1000 cases each.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "sgsrl/grpo.h"
#include "sgsrl/reward.h"
#include "sgsrl/rng.h"
#include "sgsrl/scorers.h"

using namespace sgsrl;

namespace {

constexpr int kCases = 1000;

const Lexicon& lexicon() {
  static const Lexicon lex = build_lexicon(7, 20, 4);
  return lex;
}

const std::string& pick(const std::vector<std::string>& v, Rng& rng) { return v[rng.below(v.size())]; }

// Mostly target lexemes with occasional source and neutral symbols.
Tokens random_candidate(Rng& rng, std::size_t max_len = 30) {
  const auto& lex = lexicon();
  const std::size_t n = rng.below(max_len + 1);
  Tokens out;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    if (u < 0.85) out.push_back(pick(lex.target_lexemes(), rng));
    else if (u < 0.93) out.push_back(pick(lex.neutral_symbols(), rng));
    else out.push_back(pick(lex.source_lexemes(), rng));
  }
  return out;
}

SourceDoc random_source(Rng& rng) {
  const auto& lex = lexicon();
  Tokens tokens;
  const std::size_t n = 1 + rng.below(8);
  for (std::size_t i = 0; i < n; ++i) tokens.push_back(pick(lex.source_lexemes(), rng));
  return make_source_doc(tokens, lex);
}

RewardBatch random_batch(Rng& rng, std::size_t n) {
  RewardBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.candidates.push_back(random_candidate(rng));
    b.sem.push_back(rng.uniform());
    b.lengths.push_back(static_cast<double>(b.candidates.back().size()));
  }
  return b;
}

std::vector<double> random_rewards(Rng& rng, std::size_t n) {
  std::vector<double> r(n);
  for (auto& x : r) x = rng.uniform();
  return r;
}

}  // namespace

TEST_CASE("final reward lies in [0, 1] and is zero when the gate fails") {
  Rng rng(1);
  const GateRules rules;
  for (int c = 0; c < kCases; ++c) {
    RewardConfig cfg;
    cfg.length_mode = static_cast<LengthMode>(rng.below(3));
    const std::size_t n = 1 + rng.below(16);
    const RewardBatch batch = random_batch(rng, n);
    std::vector<double> src_len(n);
    for (auto& s : src_len) s = 1.0 + static_cast<double>(rng.below(12));
    const auto out = shape_rewards(batch, src_len, {}, cfg, rules);
    REQUIRE(out.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(out[i].final_reward >= 0.0);
      CHECK(out[i].final_reward <= 1.0);
      CHECK(out[i].gate == language_gate(batch.candidates[i], rules));
      if (!out[i].gate) CHECK(out[i].final_reward == 0.0);
      CHECK(out[i].p_len >= 0.0);
      CHECK(out[i].p_len <= 1.0);
      CHECK(out[i].p_rep >= 0.0);
      CHECK(out[i].p_rep <= 1.0);
    }
  }
}

TEST_CASE("final reward is monotone in sem and antitone in the penalties") {
  Rng rng(2);
  const RewardConfig cfg;
  for (int c = 0; c < kCases; ++c) {
    RewardBatch b;
    b.candidates = {{"x"}, {"x"}};
    const double sem = rng.uniform(), p_len = rng.uniform(), p_rep = rng.uniform();
    const double bump = rng.uniform() * 0.5;
    b.sem = {sem, std::min(1.0, sem + bump)};
    b.lengths = {1, 1};
    const std::vector<double> pl{p_len, p_len}, pr{p_rep, p_rep};
    const auto up = combine(b, {true, true}, pl, pr, cfg);
    CHECK(up[1].final_reward >= up[0].final_reward);

    b.sem = {sem, sem};
    const std::vector<double> pl2{p_len, std::min(1.0, p_len + bump)};
    const std::vector<double> pr2{p_rep, std::min(1.0, p_rep + bump)};
    const auto down = combine(b, {true, true}, pl2, pr2, cfg);
    CHECK(down[1].final_reward <= down[0].final_reward);
  }
}

TEST_CASE("length penalty is scale invariant and permutation equivariant") {
  Rng rng(3);
  const RewardConfig cfg;
  for (int c = 0; c < kCases; ++c) {
    const std::size_t n = 1 + rng.below(20);
    std::vector<double> lengths(n);
    for (auto& l : lengths) l = static_cast<double>(rng.below(40));
    const auto base = length_penalties(lengths, cfg);

    const double k = 0.1 + 10.0 * rng.uniform();
    std::vector<double> scaled(lengths);
    for (auto& l : scaled) l *= k;
    const auto s = length_penalties(scaled, cfg);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<double> permuted(n);
    for (std::size_t i = 0; i < n; ++i) permuted[i] = lengths[perm[i]];
    const auto p = length_penalties(permuted, cfg);

    for (std::size_t i = 0; i < n; ++i) {
      CHECK(base[i] >= 0.0);
      CHECK(base[i] <= 1.0);
      CHECK(std::abs(s[i] - base[i]) < 1e-9);
      CHECK(p[i] == base[perm[i]]);
    }
  }
}

TEST_CASE("repetition ratio is invariant under token relabeling") {
  Rng rng(4);
  for (int c = 0; c < kCases; ++c) {
    // Small alphabet so repeats actually occur.
    Tokens t;
    const std::size_t n = rng.below(30);
    for (std::size_t i = 0; i < n; ++i) t.push_back("t" + std::to_string(rng.below(3)));
    std::map<std::string, std::string> relabel{{"t0", "t9"}, {"t1", "t4"}, {"t2", "t7"}};
    if (rng.below(2)) relabel = {{"t0", "t1"}, {"t1", "t2"}, {"t2", "t0"}};
    Tokens mapped;
    for (const auto& tok : t) mapped.push_back(relabel[tok]);
    const double r = repeated_ngram_ratio(t, 4);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(repeated_ngram_ratio(mapped, 4) == r);
  }
}

TEST_CASE("coverage is monotone under extension and ignores order and duplicates") {
  Rng rng(5);
  const auto& lex = lexicon();
  for (int c = 0; c < kCases; ++c) {
    const SourceDoc doc = random_source(rng);
    const Tokens cand = random_candidate(rng);
    const double cov = oracle_coverage(doc, cand, lex);
    CHECK(cov >= 0.0);
    CHECK(cov <= 1.0);

    Tokens extended = cand;
    const Tokens extra = random_candidate(rng, 6);
    extended.insert(extended.end(), extra.begin(), extra.end());
    CHECK(oracle_coverage(doc, extended, lex) >= cov);

    Tokens shuffled = cand;
    rng.shuffle(shuffled);
    CHECK(oracle_coverage(doc, shuffled, lex) == cov);

    Tokens duplicated = cand;
    duplicated.insert(duplicated.end(), cand.begin(), cand.end());
    CHECK(oracle_coverage(doc, duplicated, lex) == cov);
  }
}

TEST_CASE("group advantages are centered, unit scale and shift invariant") {
  Rng rng(6);
  const double eps = 1e-6;
  for (int c = 0; c < kCases; ++c) {
    const std::size_t g = 2 + rng.below(15);
    const auto r = random_rewards(rng, g);
    const auto a = group_advantages(r, AdvantageVariant::kGrpo, eps);
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / g;
    CHECK(std::abs(mean) < 1e-9);

    const double rmean = std::accumulate(r.begin(), r.end(), 0.0) / g;
    double rvar = 0.0;
    for (double x : r) rvar += (x - rmean) * (x - rmean);
    const double rstd = std::sqrt(rvar / g);
    double avar = 0.0;
    for (double x : a) avar += x * x;
    // std(a) = rstd / (rstd + eps) exactly.
    CHECK(std::abs(std::sqrt(avar / g) - rstd / (rstd + eps)) < 1e-9);

    const double shift = 10.0 * (rng.uniform() - 0.5);
    std::vector<double> shifted(r);
    for (auto& x : shifted) x += shift;
    const auto as = group_advantages(shifted, AdvantageVariant::kGrpo, eps);
    const auto d = group_advantages(r, AdvantageVariant::kDrGrpo, eps);
    const auto ds = group_advantages(shifted, AdvantageVariant::kDrGrpo, eps);

    const double k = 0.5 + 4.0 * rng.uniform();
    std::vector<double> scaled(r);
    for (auto& x : scaled) x *= k;
    const auto dk = group_advantages(scaled, AdvantageVariant::kDrGrpo, eps);
    const auto ak = group_advantages(scaled, AdvantageVariant::kGrpo, eps);
    for (std::size_t i = 0; i < g; ++i) {
      CHECK(std::abs(as[i] - a[i]) < 1e-6);
      CHECK(std::abs(ds[i] - d[i]) < 1e-9);
      CHECK(std::abs(dk[i] - k * d[i]) < 1e-9);
      // Scale invariance up to the epsilon in the denominator.
      CHECK(std::abs(ak[i] - a[i]) < 1e-3 * std::max(1.0, std::abs(a[i])) + 1e-9);
    }
  }
}

TEST_CASE("scorer outputs lie in [0, 1]") {
  Rng rng(7);
  const auto& lex = lexicon();
  const OracleScorer oracle(lex);
  const EmbeddingScorer emb(init_embedder(lex, EmbedderConfig{}, 11));
  std::vector<TextPair> pairs;
  for (int c = 0; c < kCases; ++c) {
    pairs.push_back({random_source(rng).tokens, random_candidate(rng)});
  }
  for (const SemanticScorer* s : std::initializer_list<const SemanticScorer*>{&oracle, &emb}) {
    const auto scores = s->score_batch(pairs);
    REQUIRE(scores.size() == pairs.size());
    for (double x : scores) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
  for (int c = 0; c < kCases; ++c) {
    const double z_yes = 200.0 * (rng.uniform() - 0.5);
    const double z_no = 200.0 * (rng.uniform() - 0.5);
    const double s = reranker_score({z_yes, z_no});
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("policy distributions are normalized and KL is non-negative") {
  Rng rng(8);
  const auto& lex = lexicon();
  ToyPolicy p(lex, 16), q(lex, 16);
  for (auto& w : p.params()) w = rng.normal();
  for (auto& w : q.params()) w = rng.normal();
  for (int c = 0; c < kCases; ++c) {
    const SourceDoc doc = random_source(rng);
    const Trajectory t = sample(p, doc, 1.0, rng.next());
    const auto dp = next_token_dist(p, doc, t.ids);
    const auto dq = next_token_dist(q, doc, t.ids);
    CHECK(std::abs(std::accumulate(dp.begin(), dp.end(), 0.0) - 1.0) < 1e-12);
    CHECK(categorical_kl(dp, dq) >= 0.0);
    CHECK(categorical_kl(dp, dp) == doctest::Approx(0.0));
    CHECK(kl_to_reference(p, q, t) >= 0.0);
  }
}
