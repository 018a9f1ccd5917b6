// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Train -> reinforce -> recover orchestration, oracle evaluation and the
// reward-variant comparison.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sgsrl/corpus.h"
#include "sgsrl/grpo.h"
#include "sgsrl/policy.h"
#include "sgsrl/reward.h"
#include "sgsrl/scorers.h"

namespace sgsrl {

struct CorpusConfig {
  std::size_t n_concepts = 50;
  std::size_t n_neutral = 10;
  std::uint64_t lexicon_seed = 42;
  CorpusSpec spec;
  // When set, the corpus is read from <dir>/corpus.jsonl and <dir>/lexicon.json
  // instead of being generated.
  std::optional<std::filesystem::path> dir;
};

enum class ScorerKind { kOracle, kEmbedding, kRemote };

std::string to_string(ScorerKind k);
ScorerKind scorer_kind_from_string(const std::string& name);  // ConfigError if unknown

struct ScorerConfig {
  ScorerKind kind = ScorerKind::kOracle;
  Anchor anchor = Anchor::kSource;
  EmbedderConfig embedder;
  std::optional<std::filesystem::path> embedder_path;  // load instead of training
  RemoteRerankerConfig remote;
};

inline const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"gate_batchlen", "gate_only", "ref_len", "grpo_control"};
  return names;
}

struct StagePlan {
  std::size_t sft_epochs = 3;
  std::size_t rl_epochs = 2;
  std::size_t recover_epochs = 1;
  double sft_learning_rate = 0.4;
  std::size_t sft_batch_size = 2;
  double recover_learning_rate = 0.3;
  std::size_t recover_batch_size = 2;
  std::size_t max_len = 64;
  std::string variant = "gate_batchlen";
};

struct PipelineConfig {
  CorpusConfig corpus;
  RewardConfig reward;
  GrpoConfig grpo;
  StagePlan stages;
  ScorerConfig scorer;
  std::uint64_t seed = 1234;
};

PipelineConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

// Overrides the reward/optimizer fields that define a named variant. Throws
// ConfigError for unknown names.
void apply_variant(const std::string& variant, RewardConfig& reward, GrpoConfig& grpo);

struct Metrics {
  double mean_length = 0.0;
  double gate_pass_rate = 0.0;
  double mean_coverage = 0.0;
  double mean_repetition_ratio = 0.0;
  double ngram_overlap = 0.0;
  double composite = 0.0;
};

nlohmann::json metrics_to_json(const Metrics& m);

inline constexpr double kCompositeLengthWeight = 0.20;
inline constexpr double kCompositeRepetitionWeight = 0.05;

// coverage - 0.2 * clamp((len - gold_len) / gold_len, 0, 1) - 0.05 * repeated 4-gram ratio
double composite_score(const SourceDoc& source, const Tokens& output, const Tokens& reference,
                       const Lexicon& lexicon, const RewardConfig& reward);

// Corpus-level modified n-gram precision (orders 1..4) with brevity penalty.
// Orders with no candidate n-grams are left out of the geometric mean.
double corpus_ngram_overlap(const std::vector<Tokens>& outputs, const std::vector<Tokens>& references,
                            std::size_t max_order = 4);

Metrics evaluate_outputs(const std::vector<Tokens>& outputs, std::span<const ParallelPair> dev,
                         const Lexicon& lexicon, const RewardConfig& reward);

// Greedy-decodes every dev source and scores the outputs.
Metrics evaluate(const ToyPolicy& policy, std::span<const ParallelPair> dev, const Lexicon& lexicon,
                 const RewardConfig& reward);

struct WinRate {
  double wins = 0.0;    // fraction where a's composite strictly exceeds b's
  double ties = 0.0;
  double losses = 0.0;
};

WinRate pairwise_winrate(const ToyPolicy& a, const ToyPolicy& b, std::span<const ParallelPair> dev,
                         const Lexicon& lexicon, const RewardConfig& reward);

struct World {
  Lexicon lexicon;
  CorpusBundle corpus;
};

// Generates or loads the corpus named by the config.
World load_world(const CorpusConfig& cfg);

std::unique_ptr<SemanticScorer> make_scorer(const ScorerConfig& cfg, const World& world,
                                            std::uint64_t seed);

// RL items for the source-only split. Target-anchored scoring attaches the
// lexicon-derived reference to each item.
std::vector<RlItem> rl_items(const World& world, Anchor anchor);

double gold_mean_length(std::span<const ParallelPair> dev);

struct StageResult {
  std::string name;
  Metrics dev_metrics;
  std::uint64_t checkpoint_hash = 0;
  std::filesystem::path checkpoint;
};

struct RunReport {
  nlohmann::json summary;                   // deterministic part
  std::vector<nlohmann::json> telemetry;    // one JSONL record per line
  std::vector<StageResult> stages;
  bool complete = false;
  nlohmann::json wall_clock_seconds = nlohmann::json::object();
  std::uint64_t reference_hash = 0;
};

struct PipelineOutputs {
  ToyPolicy sft;
  ToyPolicy rl;
  ToyPolicy final_policy;
};

// Runs the three stages, writes checkpoints plus report.jsonl and summary.json
// into out_dir (when non-empty) and returns the report. If `policies` is
// non-null the three checkpoints are also returned in memory.
RunReport run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                       PipelineOutputs* policies = nullptr);

// Stage entry points reused by the CLI and by run_pipeline.
ToyPolicy initial_policy(const World& world, const StagePlan& plan);
SftResult run_sft_stage(ToyPolicy& policy, const World& world, std::size_t epochs, double lr,
                        std::size_t batch_size, std::uint64_t seed);
std::vector<UpdateStats> run_rl_stage(ToyPolicy& policy, const ToyPolicy& ref, const World& world,
                                      const PipelineConfig& cfg, const std::string& variant,
                                      const SemanticScorer& scorer, std::uint64_t seed);

struct VariantRow {
  std::string variant;
  Metrics metrics;
};

struct VariantComparison {
  double gold_mean_length = 0.0;
  Metrics sft_metrics;
  std::vector<VariantRow> rows;
};

// RL stage only (no recovery) per variant, all from the same SFT checkpoint and seed.
VariantComparison compare_variants(const PipelineConfig& base, const std::vector<std::string>& variants,
                                   std::uint64_t seed);

nlohmann::json comparison_to_json(const VariantComparison& c);

}  // namespace sgsrl
