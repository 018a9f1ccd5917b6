// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sgsrl/errors.h"
#include "sgsrl/pipeline.h"

using namespace sgsrl;
using nlohmann::json;

namespace {

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.corpus.n_concepts = 12;
  cfg.corpus.n_neutral = 3;
  cfg.corpus.spec.n_parallel = 40;
  cfg.corpus.spec.m_source = 64;
  cfg.corpus.spec.n_dev = 20;
  cfg.corpus.spec.max_len = 5;
  cfg.grpo.sources_per_batch = 16;
  cfg.stages.max_len = 24;
  return cfg;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sgsrl_pipeline_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config round-trips through JSON and rejects bad values") {
  PipelineConfig cfg = small_config();
  cfg.reward.length_mode = LengthMode::kRefLen;
  cfg.scorer.kind = ScorerKind::kEmbedding;
  cfg.scorer.anchor = Anchor::kTarget;
  cfg.stages.variant = "ref_len";
  const json j = config_to_json(cfg);
  CHECK(config_to_json(config_from_json(j)) == j);

  CHECK(config_from_json(json::object()).stages.sft_epochs == 3);
  CHECK_THROWS_AS(config_from_json(json{{"grpo", {{"group_size", 1}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"stages", {{"variant", "nope"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"scorer", {{"kind", "llm"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"reward", {{"lambda_len", "high"}}}}), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/sgsrl.json"), ConfigError);
}

TEST_CASE("variant presets") {
  for (const auto& v : variant_names()) {
    RewardConfig r;
    GrpoConfig g;
    apply_variant(v, r, g);
    CHECK_NOTHROW(r.validate());
  }
  RewardConfig r;
  GrpoConfig g;
  apply_variant("gate_only", r, g);
  CHECK(r.lambda_len == 0.0);
  CHECK(r.lambda_rep == 0.0);
  r = RewardConfig{};
  apply_variant("grpo_control", r, g);
  CHECK(g.advantage_variant == AdvantageVariant::kDrGrpo);
  CHECK(r.length_mode == LengthMode::kBatchRelative);
  CHECK(r.lambda_len == 0.2);
  apply_variant("ref_len", r, g);
  CHECK(r.length_mode == LengthMode::kRefLen);
  CHECK(g.advantage_variant == AdvantageVariant::kGrpo);
  CHECK_THROWS_AS(apply_variant("bogus", r, g), ConfigError);
}

TEST_CASE("n-gram overlap") {
  const std::vector<Tokens> refs{{"t1", "t2", "t3", "t4"}, {"t5", "t6", "t7", "t8", "t9"}};
  CHECK(corpus_ngram_overlap(refs, refs) == 1.0);
  CHECK(corpus_ngram_overlap({{"t0"}, {"t0"}}, refs) == 0.0);
  // Unigram 4/4, bigram 3/3, trigram 2/2, no 4-grams; brevity exp(1 - 9/4).
  const std::vector<Tokens> partial{{"t1", "t2", "t3", "t4"}, {}};
  CHECK(std::abs(corpus_ngram_overlap(partial, refs) - std::exp(1.0 - 9.0 / 4.0)) < 1e-12);
  CHECK_THROWS_AS(corpus_ngram_overlap(partial, {refs[0]}), std::invalid_argument);
}

TEST_CASE("evaluate on gold outputs, empty outputs and an empty split") {
  const World world = load_world(small_config().corpus);
  const auto& dev = world.corpus.dev;
  std::vector<Tokens> gold, empty(dev.size());
  for (const auto& p : dev) gold.push_back(p.target);
  const auto g = evaluate_outputs(gold, dev, world.lexicon, RewardConfig{});
  CHECK(g.mean_coverage == 1.0);
  CHECK(g.gate_pass_rate == 1.0);
  CHECK(g.ngram_overlap == 1.0);
  CHECK(g.mean_repetition_ratio == 0.0);
  CHECK(g.composite == 1.0);
  CHECK(g.mean_length == doctest::Approx(gold_mean_length(dev)));

  const auto e = evaluate_outputs(empty, dev, world.lexicon, RewardConfig{});
  CHECK(e.mean_length == 0.0);
  CHECK(e.gate_pass_rate == 0.0);
  CHECK(e.mean_coverage == 0.0);

  ToyPolicy eos_only = initial_policy(world, StagePlan{});
  eos_only.w_prev(eos_only.bos_row(), eos_only.eos()) = 100.0;
  const auto m = evaluate(eos_only, dev, world.lexicon, RewardConfig{});
  CHECK(m.mean_length == 0.0);
  CHECK(m.gate_pass_rate == 0.0);

  CHECK_THROWS_AS(evaluate(eos_only, std::vector<ParallelPair>{}, world.lexicon, RewardConfig{}),
                  std::invalid_argument);
}

TEST_CASE("composite score weights") {
  const Lexicon lex = build_lexicon(1, 6, 1);
  const SourceDoc doc{{}, {0, 1}};
  const Tokens ref = gold_title(doc, lex);
  // Full coverage at twice the gold length: excess 1 -> -0.2.
  Tokens twice = ref;
  twice.insert(twice.end(), ref.begin(), ref.end());
  CHECK(std::abs(composite_score(doc, twice, ref, lex, RewardConfig{}) - 0.8) < 1e-12);
  CHECK(composite_score(doc, {lex.target_lexeme(0)}, ref, lex, RewardConfig{}) == 0.5);
}

TEST_CASE("winrate of a policy against itself is all ties") {
  const World world = load_world(small_config().corpus);
  ToyPolicy p = initial_policy(world, small_config().stages);
  run_sft_stage(p, world, 2, 0.5, 4, 1);
  const auto w = pairwise_winrate(p, p, world.corpus.dev, world.lexicon, RewardConfig{});
  CHECK(w.wins == 0.0);
  CHECK(w.ties == 1.0);
  CHECK(w.losses == 0.0);
  CHECK_THROWS_AS(pairwise_winrate(p, p, std::vector<ParallelPair>{}, world.lexicon, RewardConfig{}),
                  std::invalid_argument);
}

TEST_CASE("degenerate plan returns the SFT checkpoint") {
  PipelineConfig cfg = small_config();
  cfg.stages.rl_epochs = 0;
  cfg.stages.recover_epochs = 0;
  PipelineOutputs out;
  const auto report = run_pipeline(cfg, {}, &out);
  CHECK(report.complete);
  CHECK(out.final_policy == out.sft);
  CHECK(out.rl == out.sft);
  CHECK(report.reference_hash == out.sft.hash());
}

TEST_CASE("full run writes checkpoints and reports, and is reproducible") {
  const auto dir_a = scratch("a");
  const auto dir_b = scratch("b");
  PipelineConfig cfg = small_config();
  PipelineOutputs out;
  const auto report = run_pipeline(cfg, dir_a, &out);
  run_pipeline(cfg, dir_b);
  CHECK(report.complete);
  REQUIRE(report.stages.size() == 3);
  for (const char* name : {"sft.json", "rl.json", "sgsrl.json", "report.jsonl", "summary.json"}) {
    CHECK(std::filesystem::exists(dir_a / name));
  }
  CHECK(load_policy(dir_a / "sft.json") == out.sft);
  CHECK(load_policy(dir_a / "sgsrl.json") == out.final_policy);
  CHECK(slurp(dir_a / "report.jsonl") == slurp(dir_b / "report.jsonl"));

  json sa = json::parse(slurp(dir_a / "summary.json"));
  json sb = json::parse(slurp(dir_b / "summary.json"));
  CHECK(sa.contains("wall_clock_seconds"));
  sa.erase("wall_clock_seconds");
  sb.erase("wall_clock_seconds");
  CHECK(sa == sb);
  CHECK(sa["complete"] == true);
  CHECK(sa["reference_hash"] == sa["stages"][0]["checkpoint_hash"]);
}

TEST_CASE("missing corpus directory fails before training") {
  PipelineConfig cfg = small_config();
  cfg.corpus.dir = "/nonexistent/corpus";
  const auto dir = scratch("missing");
  CHECK_THROWS_AS(run_pipeline(cfg, dir), ConfigError);
  CHECK_FALSE(std::filesystem::exists(dir / "sft.json"));
}

TEST_CASE("stage failure leaves an incomplete report") {
  PipelineConfig cfg = small_config();
  cfg.scorer.kind = ScorerKind::kRemote;
  cfg.scorer.remote.endpoint = "http://127.0.0.1:1/rerank";
  cfg.scorer.remote.retries = 0;
  cfg.scorer.remote.timeout_seconds = 0.5;
  const auto dir = scratch("incomplete");
  CHECK_THROWS_AS(run_pipeline(cfg, dir), TransportError);
  const json summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary["complete"] == false);
  REQUIRE(summary["stages"].size() == 1);
  CHECK(summary["stages"][0]["name"] == "sft");
  CHECK(std::filesystem::exists(dir / "sft.json"));
}

TEST_CASE("corpus directory is used when given") {
  const auto dir = scratch("corpus_dir");
  std::filesystem::create_directories(dir);
  const PipelineConfig cfg = small_config();
  const World generated = load_world(cfg.corpus);
  write_lexicon(dir / "lexicon.json", generated.lexicon);
  write_corpus_jsonl(dir / "corpus.jsonl", generated.corpus);
  CorpusConfig from_disk;
  from_disk.dir = dir;
  const World loaded = load_world(from_disk);
  CHECK(loaded.lexicon == generated.lexicon);
  CHECK(loaded.corpus == generated.corpus);
}

TEST_CASE("compare_variants rejects unknown names and reports every variant") {
  const PipelineConfig cfg = small_config();
  CHECK_THROWS_AS(compare_variants(cfg, {"gate_only", "mystery"}, 1), ConfigError);
  const auto cmp = compare_variants(cfg, {"grpo_control"}, 1);
  REQUIRE(cmp.rows.size() == 1);
  const json j = comparison_to_json(cmp);
  for (const char* key : {"mean_length", "gate_pass_rate", "mean_coverage", "mean_repetition_ratio",
                          "ngram_overlap", "composite"}) {
    CHECK(j["variants"][0]["dev"].contains(key));
  }
}

TEST_CASE("target-anchored RL items carry lexicon references") {
  const World world = load_world(small_config().corpus);
  const auto src = rl_items(world, Anchor::kSource);
  const auto tgt = rl_items(world, Anchor::kTarget);
  CHECK(src.size() == world.corpus.source_only.size());
  CHECK_FALSE(src[0].reference.has_value());
  REQUIRE(tgt[0].reference.has_value());
  CHECK(*tgt[0].reference == gold_title(tgt[0].source, world.lexicon));
}

TEST_CASE("default plan: RL gains coverage with verbosity and recovery shortens it") {
  PipelineOutputs out;
  const auto report = run_pipeline(PipelineConfig{}, {}, &out);
  REQUIRE(report.stages.size() == 3);
  const Metrics& sft = report.stages[0].dev_metrics;
  const Metrics& rl = report.stages[1].dev_metrics;
  const Metrics& fin = report.stages[2].dev_metrics;
  CHECK(rl.mean_coverage >= sft.mean_coverage);
  CHECK(rl.mean_length > sft.mean_length);
  CHECK(fin.mean_length < rl.mean_length);
  CHECK(fin.mean_coverage >= sft.mean_coverage);
}

TEST_CASE("default corpus: gate_only ends longer than gate_batchlen") {
  const PipelineConfig cfg;
  const auto cmp = compare_variants(cfg, {"gate_batchlen", "gate_only"}, cfg.seed);
  CHECK(cmp.rows[1].metrics.mean_length > cmp.rows[0].metrics.mean_length);
}
