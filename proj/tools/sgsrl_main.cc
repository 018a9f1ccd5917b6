// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// sgsrl command-line driver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sgsrl/errors.h"
#include "sgsrl/pipeline.h"
#include "sgsrl/rng.h"

using namespace sgsrl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string variant;
  std::string scorer;
  std::string checkpoint;
  std::string baseline;
  std::string input;
  std::vector<std::string> variants;
};

PipelineConfig resolve(const Options& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.variant.empty()) {
    apply_variant(o.variant, cfg.reward, cfg.grpo);  // validates the name
    cfg.stages.variant = o.variant;
  }
  if (!o.scorer.empty()) cfg.scorer.kind = scorer_kind_from_string(o.scorer);
  return cfg;
}

ToyPolicy require_checkpoint(const std::string& path, const char* flag) {
  if (path.empty()) throw ConfigError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
  return load_policy(path);
}

fs::path prepare_out(const Options& o) {
  fs::create_directories(o.out);
  return o.out;
}

void save_stage(const fs::path& path, const ToyPolicy& p, const PipelineConfig& cfg, const std::string& stage) {
  save_policy(path, p, json{{"stage", stage}, {"seed", cfg.seed}, {"config", config_to_json(cfg)}}.dump());
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(p.hash()));
  std::cout << json{{"stage", stage}, {"checkpoint", path.string()}, {"hash", hash}}.dump() << '\n';
}

int cmd_gen_data(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const World world = load_world(cfg.corpus);
  const fs::path out = prepare_out(o);
  write_lexicon(out / "lexicon.json", world.lexicon);
  write_corpus_jsonl(out / "corpus.jsonl", world.corpus);
  std::cout << json{{"parallel", world.corpus.parallel.size()},
                    {"source_only", world.corpus.source_only.size()},
                    {"dev", world.corpus.dev.size()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_sft(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const World world = load_world(cfg.corpus);
  ToyPolicy policy = initial_policy(world, cfg.stages);
  const auto res = run_sft_stage(policy, world, cfg.stages.sft_epochs, cfg.stages.sft_learning_rate,
                                 cfg.stages.sft_batch_size, mix_seed(cfg.seed, 1));
  std::cout << json{{"initial_nll", res.initial_nll}, {"epoch_nll", res.epoch_nll}}.dump() << '\n';
  save_stage(prepare_out(o) / "sft.json", policy, cfg, "sft");
  return 0;
}

int cmd_rl(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const World world = load_world(cfg.corpus);
  const ToyPolicy ref = require_checkpoint(o.checkpoint, "--init");
  ToyPolicy policy = ref;
  const auto scorer = make_scorer(cfg.scorer, world, cfg.seed);
  const auto stats = run_rl_stage(policy, ref, world, cfg, cfg.stages.variant, *scorer, mix_seed(cfg.seed, 2));
  for (std::size_t b = 0; b < stats.size(); ++b) {
    const auto& s = stats[b];
    std::cout << json{{"batch", b},
                      {"surrogate_loss", s.surrogate_loss},
                      {"mean_kl_to_ref", s.mean_kl_to_ref},
                      {"grad_norm", s.grad_norm},
                      {"clip_fraction", s.clip_fraction},
                      {"mean_reward", s.mean_reward},
                      {"mean_length", s.mean_length}}
                     .dump()
              << '\n';
  }
  save_stage(prepare_out(o) / "rl.json", policy, cfg, "rl");
  return 0;
}

int cmd_recover(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const World world = load_world(cfg.corpus);
  ToyPolicy policy = require_checkpoint(o.checkpoint, "--init");
  const auto res = run_sft_stage(policy, world, cfg.stages.recover_epochs, cfg.stages.recover_learning_rate,
                                 cfg.stages.recover_batch_size, mix_seed(cfg.seed, 3));
  std::cout << json{{"initial_nll", res.initial_nll}, {"epoch_nll", res.epoch_nll}}.dump() << '\n';
  save_stage(prepare_out(o) / "sgsrl.json", policy, cfg, "sgsrl");
  return 0;
}

int cmd_eval(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const World world = load_world(cfg.corpus);
  const ToyPolicy policy = require_checkpoint(o.checkpoint, "--checkpoint");
  const Metrics m = evaluate(policy, world.corpus.dev, world.lexicon, cfg.reward);
  std::cout << json{{"gold_mean_length", gold_mean_length(world.corpus.dev)}, {"dev", metrics_to_json(m)}}.dump(2)
            << '\n';
  return 0;
}

int cmd_compare(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const auto variants = o.variants.empty() ? variant_names() : o.variants;
  const json j = comparison_to_json(compare_variants(cfg, variants, cfg.seed));
  std::ofstream(prepare_out(o) / "comparison.json") << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_winrate(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const World world = load_world(cfg.corpus);
  const ToyPolicy a = require_checkpoint(o.checkpoint, "--checkpoint");
  const ToyPolicy b = require_checkpoint(o.baseline, "--baseline");
  const WinRate w = pairwise_winrate(a, b, world.corpus.dev, world.lexicon, cfg.reward);
  std::cout << json{{"wins", w.wins}, {"ties", w.ties}, {"losses", w.losses}}.dump() << '\n';
  return 0;
}

int cmd_full(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const RunReport report = run_pipeline(cfg, prepare_out(o));
  std::cout << report.summary.dump(2) << '\n';
  return report.complete ? 0 : 1;
}

// Input: JSONL records {"source": str, "candidate": str, "reference": str?}.
// The whole file is one reward batch.
int cmd_score(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  if (o.input.empty()) throw ConfigError("--input is required");
  std::ifstream in(o.input);
  if (!in) throw ConfigError("cannot open " + o.input);
  const bool target_anchor = cfg.scorer.anchor == Anchor::kTarget;
  std::vector<TextPair> pairs;
  RewardBatch batch;
  std::vector<double> source_lengths;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(o.input + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const Tokens source = split_tokens(rec.value("source", ""));
    const Tokens candidate = split_tokens(rec.value("candidate", ""));
    if (target_anchor && !rec.contains("reference")) {
      throw ConfigError(o.input + ":" + std::to_string(lineno) + ": target anchor needs a reference");
    }
    pairs.push_back({target_anchor ? split_tokens(rec.at("reference").get<std::string>()) : source, candidate});
    batch.candidates.push_back(candidate);
    batch.lengths.push_back(static_cast<double>(candidate.size()));
    source_lengths.push_back(static_cast<double>(source.size()));
  }
  if (pairs.empty()) throw ConfigError("no records in " + o.input);
  const World world = load_world(cfg.corpus);
  const auto scorer = make_scorer(cfg.scorer, world, cfg.seed);
  batch.sem = scorer->score_batch(pairs);
  const auto out = shape_rewards(batch, source_lengths, {}, cfg.reward, GateRules::from(cfg.reward));
  for (const auto& r : out) {
    std::cout << json{{"gate", r.gate}, {"sem", r.sem}, {"p_len", r.p_len}, {"p_rep", r.p_rep},
                      {"shaped", r.shaped}, {"final", r.final_reward}}
                     .dump()
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sgsrl: source-grounded semantic RL on a synthetic bilingual task"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "run seed override");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--variant", o.variant, "reward variant")->check(CLI::IsMember(variant_names()));
    sub->add_option("--scorer", o.scorer, "semantic scorer")
        ->check(CLI::IsMember({"oracle", "embedding", "remote"}));
  };

  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const std::vector<Cmd> cmds{
      {"gen-data", "write lexicon.json and corpus.jsonl", cmd_gen_data},
      {"sft", "target-form initialization", cmd_sft},
      {"rl", "semantic RL from --init", cmd_rl},
      {"recover", "recovery fine-tuning from --init", cmd_recover},
      {"eval", "dev metrics of --checkpoint", cmd_eval},
      {"compare", "RL-stage comparison of reward variants", cmd_compare},
      {"winrate", "pairwise win rate of --checkpoint over --baseline", cmd_winrate},
      {"full", "all three stages with reports", cmd_full},
      {"score", "reward breakdowns for JSONL candidates", cmd_score},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Options&)>> subs;
  for (const auto& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    common(sub);
    const std::string name = c.name;
    if (name == "rl" || name == "recover") sub->add_option("--init", o.checkpoint, "starting checkpoint");
    if (name == "eval" || name == "winrate") sub->add_option("--checkpoint", o.checkpoint, "policy checkpoint");
    if (name == "winrate") sub->add_option("--baseline", o.baseline, "baseline checkpoint");
    if (name == "compare") sub->add_option("--variants", o.variants, "variants to compare (default: all)");
    if (name == "score") sub->add_option("--input", o.input, "JSONL candidates");
    subs.emplace_back(sub, c.fn);
  }

  CLI11_PARSE(app, argc, argv);
  try {
    for (const auto& [sub, fn] : subs) {
      if (sub->parsed()) return fn(o);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
