// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sgsrl/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "sgsrl/errors.h"
#include "sgsrl/rng.h"

namespace sgsrl {

using nlohmann::json;

namespace {

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

std::string to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::kOracle: return "oracle";
    case ScorerKind::kEmbedding: return "embedding";
    case ScorerKind::kRemote: return "remote";
  }
  return "oracle";
}

ScorerKind scorer_kind_from_string(const std::string& s) {
  if (s == "oracle") return ScorerKind::kOracle;
  if (s == "embedding") return ScorerKind::kEmbedding;
  if (s == "remote") return ScorerKind::kRemote;
  throw ConfigError("unknown scorer: " + s);
}

PipelineConfig config_from_json(const json& doc) {
  PipelineConfig cfg;
  try {
    read_field(doc, "seed", cfg.seed);
    if (doc.contains("corpus")) {
      const json& c = doc.at("corpus");
      read_field(c, "n_concepts", cfg.corpus.n_concepts);
      read_field(c, "n_neutral", cfg.corpus.n_neutral);
      read_field(c, "lexicon_seed", cfg.corpus.lexicon_seed);
      read_field(c, "n_parallel", cfg.corpus.spec.n_parallel);
      read_field(c, "m_source", cfg.corpus.spec.m_source);
      read_field(c, "n_dev", cfg.corpus.spec.n_dev);
      read_field(c, "min_len", cfg.corpus.spec.min_len);
      read_field(c, "max_len", cfg.corpus.spec.max_len);
      read_field(c, "filler_rate", cfg.corpus.spec.filler_rate);
      read_field(c, "seed", cfg.corpus.spec.seed);
      if (c.contains("dir") && !c.at("dir").is_null()) cfg.corpus.dir = c.at("dir").get<std::string>();
    }
    if (doc.contains("reward")) {
      const json& r = doc.at("reward");
      RewardConfig& rc = cfg.reward;
      read_field(r, "lambda_len", rc.lambda_len);
      read_field(r, "lambda_rep", rc.lambda_rep);
      read_field(r, "len_start_mult", rc.len_start_mult);
      read_field(r, "len_full_mult", rc.len_full_mult);
      read_field(r, "rep_ngram", rc.rep_ngram);
      read_field(r, "rep_threshold", rc.rep_threshold);
      read_field(r, "gate_min_target_frac", rc.gate_min_target_frac);
      read_field(r, "gate_max_neutral_frac", rc.gate_max_neutral_frac);
      read_field(r, "ref_len_ratio", rc.ref_len_ratio);
      read_field(r, "ref_len_tolerance", rc.ref_len_tolerance);
      if (r.contains("length_mode")) rc.length_mode = length_mode_from_string(r.at("length_mode"));
      if (r.contains("median_scope")) rc.median_scope = median_scope_from_string(r.at("median_scope"));
    }
    if (doc.contains("grpo")) {
      const json& g = doc.at("grpo");
      GrpoConfig& gc = cfg.grpo;
      read_field(g, "group_size", gc.group_size);
      read_field(g, "clip_eps", gc.clip_eps);
      read_field(g, "kl_beta", gc.kl_beta);
      read_field(g, "learning_rate", gc.learning_rate);
      read_field(g, "std_epsilon", gc.std_epsilon);
      read_field(g, "updates_per_batch", gc.updates_per_batch);
      read_field(g, "temperature", gc.temperature);
      read_field(g, "sources_per_batch", gc.sources_per_batch);
      read_field(g, "max_grad_norm", gc.max_grad_norm);
      if (g.contains("advantage_variant")) {
        gc.advantage_variant = advantage_variant_from_string(g.at("advantage_variant"));
      }
    }
    if (doc.contains("stages")) {
      const json& s = doc.at("stages");
      StagePlan& p = cfg.stages;
      read_field(s, "sft_epochs", p.sft_epochs);
      read_field(s, "rl_epochs", p.rl_epochs);
      read_field(s, "recover_epochs", p.recover_epochs);
      read_field(s, "sft_learning_rate", p.sft_learning_rate);
      read_field(s, "sft_batch_size", p.sft_batch_size);
      read_field(s, "recover_learning_rate", p.recover_learning_rate);
      read_field(s, "recover_batch_size", p.recover_batch_size);
      read_field(s, "max_len", p.max_len);
      read_field(s, "variant", p.variant);
    }
    if (doc.contains("scorer")) {
      const json& s = doc.at("scorer");
      ScorerConfig& sc = cfg.scorer;
      if (s.contains("kind")) sc.kind = scorer_kind_from_string(s.at("kind"));
      if (s.contains("anchor")) sc.anchor = anchor_from_string(s.at("anchor"));
      if (s.contains("embedder_path") && !s.at("embedder_path").is_null()) {
        sc.embedder_path = s.at("embedder_path").get<std::string>();
      }
      if (s.contains("embedder")) {
        const json& e = s.at("embedder");
        read_field(e, "dim", sc.embedder.dim);
        read_field(e, "epochs", sc.embedder.epochs);
        read_field(e, "batch_size", sc.embedder.batch_size);
        read_field(e, "learning_rate", sc.embedder.learning_rate);
        read_field(e, "temperature", sc.embedder.temperature);
        read_field(e, "init_scale", sc.embedder.init_scale);
      }
      if (s.contains("remote")) {
        const json& r = s.at("remote");
        read_field(r, "endpoint", sc.remote.endpoint);
        read_field(r, "instruction", sc.remote.instruction);
        read_field(r, "timeout_seconds", sc.remote.timeout_seconds);
        read_field(r, "max_in_flight", sc.remote.max_in_flight);
        read_field(r, "retries", sc.remote.retries);
        read_field(r, "backoff_initial_ms", sc.remote.backoff_initial_ms);
        read_field(r, "max_pairs_per_request", sc.remote.max_pairs_per_request);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  try {
    cfg.reward.validate();
    cfg.grpo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  if (std::find(variant_names().begin(), variant_names().end(), cfg.stages.variant) ==
      variant_names().end()) {
    throw ConfigError("unknown variant: " + cfg.stages.variant);
  }
  return cfg;
}

json config_to_json(const PipelineConfig& cfg) {
  const auto& c = cfg.corpus;
  const auto& r = cfg.reward;
  const auto& g = cfg.grpo;
  const auto& s = cfg.stages;
  const auto& sc = cfg.scorer;
  json corpus{{"n_concepts", c.n_concepts},
              {"n_neutral", c.n_neutral},
              {"lexicon_seed", c.lexicon_seed},
              {"n_parallel", c.spec.n_parallel},
              {"m_source", c.spec.m_source},
              {"n_dev", c.spec.n_dev},
              {"min_len", c.spec.min_len},
              {"max_len", c.spec.max_len},
              {"filler_rate", c.spec.filler_rate},
              {"seed", c.spec.seed},
              {"dir", c.dir ? json(c.dir->string()) : json(nullptr)}};
  json reward{{"lambda_len", r.lambda_len},
              {"lambda_rep", r.lambda_rep},
              {"len_start_mult", r.len_start_mult},
              {"len_full_mult", r.len_full_mult},
              {"rep_ngram", r.rep_ngram},
              {"rep_threshold", r.rep_threshold},
              {"gate_min_target_frac", r.gate_min_target_frac},
              {"gate_max_neutral_frac", r.gate_max_neutral_frac},
              {"length_mode", to_string(r.length_mode)},
              {"median_scope", to_string(r.median_scope)},
              {"ref_len_ratio", r.ref_len_ratio},
              {"ref_len_tolerance", r.ref_len_tolerance}};
  json grpo{{"group_size", g.group_size},
            {"clip_eps", g.clip_eps},
            {"kl_beta", g.kl_beta},
            {"learning_rate", g.learning_rate},
            {"advantage_variant", to_string(g.advantage_variant)},
            {"std_epsilon", g.std_epsilon},
            {"updates_per_batch", g.updates_per_batch},
            {"temperature", g.temperature},
            {"sources_per_batch", g.sources_per_batch},
            {"max_grad_norm", g.max_grad_norm}};
  json stages{{"sft_epochs", s.sft_epochs},
              {"rl_epochs", s.rl_epochs},
              {"recover_epochs", s.recover_epochs},
              {"sft_learning_rate", s.sft_learning_rate},
              {"sft_batch_size", s.sft_batch_size},
              {"recover_learning_rate", s.recover_learning_rate},
              {"recover_batch_size", s.recover_batch_size},
              {"max_len", s.max_len},
              {"variant", s.variant}};
  json scorer{{"kind", to_string(sc.kind)},
              {"anchor", to_string(sc.anchor)},
              {"embedder_path", sc.embedder_path ? json(sc.embedder_path->string()) : json(nullptr)},
              {"embedder",
               {{"dim", sc.embedder.dim},
                {"epochs", sc.embedder.epochs},
                {"batch_size", sc.embedder.batch_size},
                {"learning_rate", sc.embedder.learning_rate},
                {"temperature", sc.embedder.temperature},
                {"init_scale", sc.embedder.init_scale}}},
              {"remote",
               {{"endpoint", sc.remote.endpoint},
                {"instruction", sc.remote.instruction},
                {"timeout_seconds", sc.remote.timeout_seconds},
                {"max_in_flight", sc.remote.max_in_flight},
                {"retries", sc.remote.retries},
                {"backoff_initial_ms", sc.remote.backoff_initial_ms},
                {"max_pairs_per_request", sc.remote.max_pairs_per_request}}}};
  return json{{"seed", cfg.seed}, {"corpus", corpus}, {"reward", reward},
              {"grpo", grpo}, {"stages", stages}, {"scorer", scorer}};
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void apply_variant(const std::string& variant, RewardConfig& reward, GrpoConfig& grpo) {
  if (variant == "gate_batchlen") {
    reward.length_mode = LengthMode::kBatchRelative;
    grpo.advantage_variant = AdvantageVariant::kGrpo;
  } else if (variant == "gate_only") {
    reward.lambda_len = 0.0;
    reward.lambda_rep = 0.0;
    reward.length_mode = LengthMode::kNone;
    grpo.advantage_variant = AdvantageVariant::kGrpo;
  } else if (variant == "ref_len") {
    reward.length_mode = LengthMode::kRefLen;
    grpo.advantage_variant = AdvantageVariant::kGrpo;
  } else if (variant == "grpo_control") {
    reward.length_mode = LengthMode::kBatchRelative;
    grpo.advantage_variant = AdvantageVariant::kDrGrpo;
  } else {
    throw ConfigError("unknown variant: " + variant);
  }
}

json metrics_to_json(const Metrics& m) {
  return json{{"mean_length", m.mean_length},
              {"gate_pass_rate", m.gate_pass_rate},
              {"mean_coverage", m.mean_coverage},
              {"mean_repetition_ratio", m.mean_repetition_ratio},
              {"ngram_overlap", m.ngram_overlap},
              {"composite", m.composite}};
}

double composite_score(const SourceDoc& source, const Tokens& output, const Tokens& reference,
                       const Lexicon& lexicon, const RewardConfig& reward) {
  const double coverage = oracle_coverage(source, output, lexicon);
  const double gold = std::max<double>(1.0, static_cast<double>(reference.size()));
  const double excess = std::clamp((static_cast<double>(output.size()) - gold) / gold, 0.0, 1.0);
  const double rep = repeated_ngram_ratio(output, reward.rep_ngram);
  return coverage - kCompositeLengthWeight * excess - kCompositeRepetitionWeight * rep;
}

double corpus_ngram_overlap(const std::vector<Tokens>& outputs, const std::vector<Tokens>& references,
                            std::size_t max_order) {
  if (outputs.size() != references.size()) {
    throw std::invalid_argument("corpus_ngram_overlap: size mismatch");
  }
  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 1; n <= max_order; ++n) {
    double matched = 0.0, total = 0.0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      std::map<Tokens, std::size_t> ref_counts, out_counts;
      const auto& out = outputs[i];
      const auto& ref = references[i];
      for (std::size_t s = 0; s + n <= ref.size(); ++s) ++ref_counts[Tokens(ref.begin() + s, ref.begin() + s + n)];
      for (std::size_t s = 0; s + n <= out.size(); ++s) ++out_counts[Tokens(out.begin() + s, out.begin() + s + n)];
      for (const auto& [gram, count] : out_counts) {
        total += static_cast<double>(count);
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched += static_cast<double>(std::min(count, it->second));
      }
    }
    if (total == 0.0) continue;
    if (matched == 0.0) return 0.0;
    log_sum += std::log(matched / total);
    ++orders;
  }
  if (orders == 0) return 0.0;
  double out_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    out_len += static_cast<double>(outputs[i].size());
    ref_len += static_cast<double>(references[i].size());
  }
  const double bp = out_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / out_len);
  return std::clamp(bp * std::exp(log_sum / static_cast<double>(orders)), 0.0, 1.0);
}

Metrics evaluate_outputs(const std::vector<Tokens>& outputs, std::span<const ParallelPair> dev,
                         const Lexicon& lexicon, const RewardConfig& reward) {
  if (dev.empty()) throw std::invalid_argument("evaluate: empty dev split");
  if (outputs.size() != dev.size()) throw std::invalid_argument("evaluate: one output per dev item required");
  const GateRules rules = GateRules::from(reward);
  Metrics m;
  std::vector<Tokens> refs;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    const Tokens& out = outputs[i];
    m.mean_length += static_cast<double>(out.size());
    m.gate_pass_rate += language_gate(out, rules) ? 1.0 : 0.0;
    m.mean_coverage += oracle_coverage(dev[i].source, out, lexicon);
    m.mean_repetition_ratio += repeated_ngram_ratio(out, reward.rep_ngram);
    m.composite += composite_score(dev[i].source, out, dev[i].target, lexicon, reward);
    refs.push_back(dev[i].target);
  }
  const double n = static_cast<double>(dev.size());
  m.mean_length /= n;
  m.gate_pass_rate /= n;
  m.mean_coverage /= n;
  m.mean_repetition_ratio /= n;
  m.composite /= n;
  m.ngram_overlap = corpus_ngram_overlap(outputs, refs);
  return m;
}

Metrics evaluate(const ToyPolicy& policy, std::span<const ParallelPair> dev, const Lexicon& lexicon,
                 const RewardConfig& reward) {
  if (dev.empty()) throw std::invalid_argument("evaluate: empty dev split");
  std::vector<Tokens> outputs;
  outputs.reserve(dev.size());
  for (const auto& p : dev) outputs.push_back(greedy_decode(policy, p.source).tokens);
  return evaluate_outputs(outputs, dev, lexicon, reward);
}

WinRate pairwise_winrate(const ToyPolicy& a, const ToyPolicy& b, std::span<const ParallelPair> dev,
                         const Lexicon& lexicon, const RewardConfig& reward) {
  if (dev.empty()) throw std::invalid_argument("pairwise_winrate: empty dev split");
  WinRate w;
  for (const auto& p : dev) {
    const double sa = composite_score(p.source, greedy_decode(a, p.source).tokens, p.target, lexicon, reward);
    const double sb = composite_score(p.source, greedy_decode(b, p.source).tokens, p.target, lexicon, reward);
    if (sa > sb) {
      w.wins += 1.0;
    } else if (sa == sb) {
      w.ties += 1.0;
    } else {
      w.losses += 1.0;
    }
  }
  const double n = static_cast<double>(dev.size());
  w.wins /= n;
  w.ties /= n;
  w.losses /= n;
  return w;
}

World load_world(const CorpusConfig& cfg) {
  if (cfg.dir) {
    const auto lex_path = *cfg.dir / "lexicon.json";
    const auto corpus_path = *cfg.dir / "corpus.jsonl";
    if (!std::filesystem::exists(lex_path) || !std::filesystem::exists(corpus_path)) {
      throw ConfigError("corpus directory " + cfg.dir->string() + " lacks lexicon.json / corpus.jsonl");
    }
    Lexicon lexicon = read_lexicon(lex_path);
    CorpusBundle corpus = read_corpus_jsonl(corpus_path, lexicon);
    return {std::move(lexicon), std::move(corpus)};
  }
  Lexicon lexicon = build_lexicon(cfg.lexicon_seed, cfg.n_concepts, cfg.n_neutral);
  CorpusBundle corpus = gen_corpus(lexicon, cfg.spec);
  return {std::move(lexicon), std::move(corpus)};
}

std::unique_ptr<SemanticScorer> make_scorer(const ScorerConfig& cfg, const World& world,
                                            std::uint64_t seed) {
  switch (cfg.kind) {
    case ScorerKind::kOracle: return std::make_unique<OracleScorer>(world.lexicon);
    case ScorerKind::kEmbedding: {
      if (cfg.embedder_path) return std::make_unique<EmbeddingScorer>(load_embedder(*cfg.embedder_path));
      auto trained = train_contrastive(world.lexicon, world.corpus.parallel, cfg.embedder, mix_seed(seed, 0xe));
      return std::make_unique<EmbeddingScorer>(std::move(trained.embedder));
    }
    case ScorerKind::kRemote: return std::make_unique<RemoteRerankerScorer>(cfg.remote);
  }
  throw ConfigError("unknown scorer kind");
}

std::vector<RlItem> rl_items(const World& world, Anchor anchor) {
  std::vector<RlItem> items;
  items.reserve(world.corpus.source_only.size());
  for (const auto& doc : world.corpus.source_only) {
    RlItem item{doc, std::nullopt};
    if (anchor == Anchor::kTarget) item.reference = gold_title(doc, world.lexicon);
    items.push_back(std::move(item));
  }
  return items;
}

double gold_mean_length(std::span<const ParallelPair> dev) {
  if (dev.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : dev) total += static_cast<double>(p.target.size());
  return total / static_cast<double>(dev.size());
}

ToyPolicy initial_policy(const World& world, const StagePlan& plan) {
  return ToyPolicy(world.lexicon, plan.max_len);
}

SftResult run_sft_stage(ToyPolicy& policy, const World& world, std::size_t epochs, double lr,
                        std::size_t batch_size, std::uint64_t seed) {
  if (epochs == 0) {
    SftResult r;
    r.initial_nll = mean_nll(policy, world.corpus.parallel);
    return r;
  }
  return sft_train(policy, world.corpus.parallel, SftConfig{epochs, lr, batch_size}, seed);
}

std::vector<UpdateStats> run_rl_stage(ToyPolicy& policy, const ToyPolicy& ref, const World& world,
                                      const PipelineConfig& cfg, const std::string& variant,
                                      const SemanticScorer& scorer, std::uint64_t seed) {
  RlSetup setup{&scorer, cfg.reward, cfg.grpo, cfg.scorer.anchor};
  apply_variant(variant, setup.reward, setup.grpo);
  const auto items = rl_items(world, cfg.scorer.anchor);
  std::vector<UpdateStats> all;
  for (std::size_t epoch = 0; epoch < cfg.stages.rl_epochs; ++epoch) {
    auto stats = rl_epoch(policy, ref, items, setup, mix_seed(seed, 0x700 + epoch));
    all.insert(all.end(), stats.begin(), stats.end());
  }
  return all;
}

namespace {

json update_stats_json(const UpdateStats& s) {
  return json{{"surrogate_loss", s.surrogate_loss}, {"mean_kl_to_ref", s.mean_kl_to_ref},
              {"grad_norm", s.grad_norm},           {"clip_fraction", s.clip_fraction},
              {"mean_reward", s.mean_reward},       {"mean_length", s.mean_length},
              {"mean_sem", s.mean_sem},             {"gate_pass_rate", s.gate_pass_rate}};
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return out;
}

class StageClock {
 public:
  StageClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

RunReport run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                       PipelineOutputs* policies) {
  RunReport report;
  const World world = load_world(cfg.corpus);  // ConfigError before any training
  const bool persist = !out_dir.empty();
  if (persist) std::filesystem::create_directories(out_dir);

  report.summary = json{{"config", config_to_json(cfg)},
                        {"seeds",
                         {{"run", cfg.seed},
                          {"lexicon", world.lexicon.seed()},
                          {"corpus", world.corpus.seed}}},
                        {"corpus_sizes",
                         {{"parallel", world.corpus.parallel.size()},
                          {"source_only", world.corpus.source_only.size()},
                          {"dev", world.corpus.dev.size()}}},
                        {"gold_dev_mean_length", gold_mean_length(world.corpus.dev)},
                        {"stages", json::array()},
                        {"complete", false}};

  auto write_outputs = [&] {
    if (!persist) return;
    std::ofstream jsonl(out_dir / "report.jsonl");
    for (const auto& rec : report.telemetry) jsonl << rec.dump() << '\n';
    json summary = report.summary;
    summary["wall_clock_seconds"] = report.wall_clock_seconds;
    std::ofstream(out_dir / "summary.json") << summary.dump(2) << '\n';
  };

  auto finish_stage = [&](const std::string& name, const ToyPolicy& policy) {
    StageResult stage;
    stage.name = name;
    stage.dev_metrics = evaluate(policy, world.corpus.dev, world.lexicon, cfg.reward);
    stage.checkpoint_hash = policy.hash();
    if (persist) {
      stage.checkpoint = out_dir / (name + ".json");
      save_policy(stage.checkpoint, policy,
                  json{{"stage", name}, {"seed", cfg.seed}, {"config", config_to_json(cfg)}}.dump());
    }
    report.telemetry.push_back(json{{"stage", name}, {"event", "eval"}, {"dev", metrics_to_json(stage.dev_metrics)}});
    report.summary["stages"].push_back(json{{"name", name},
                                            {"dev_metrics", metrics_to_json(stage.dev_metrics)},
                                            {"checkpoint_hash", hex64(stage.checkpoint_hash)},
                                            {"checkpoint", stage.checkpoint.filename().string()}});
    report.stages.push_back(stage);
    write_outputs();
  };

  try {
    ToyPolicy policy = initial_policy(world, cfg.stages);

    StageClock sft_clock;
    const auto sft = run_sft_stage(policy, world, cfg.stages.sft_epochs, cfg.stages.sft_learning_rate,
                                   cfg.stages.sft_batch_size, mix_seed(cfg.seed, 1));
    report.telemetry.push_back(json{{"stage", "sft"}, {"event", "init"}, {"nll", sft.initial_nll}});
    for (std::size_t e = 0; e < sft.epoch_nll.size(); ++e) {
      report.telemetry.push_back(json{{"stage", "sft"}, {"epoch", e + 1}, {"nll", sft.epoch_nll[e]}});
    }
    report.wall_clock_seconds["sft"] = sft_clock.seconds();
    finish_stage("sft", policy);
    if (policies) policies->sft = policy;

    const ToyPolicy reference = policy;  // frozen for the RL stage
    report.reference_hash = reference.hash();
    report.summary["reference_hash"] = hex64(report.reference_hash);

    StageClock rl_clock;
    if (cfg.stages.rl_epochs > 0) {
      const auto scorer = make_scorer(cfg.scorer, world, cfg.seed);
      const auto stats =
          run_rl_stage(policy, reference, world, cfg, cfg.stages.variant, *scorer, mix_seed(cfg.seed, 2));
      const std::size_t per_epoch = stats.size() / cfg.stages.rl_epochs;
      for (std::size_t b = 0; b < stats.size(); ++b) {
        json rec = update_stats_json(stats[b]);
        rec["stage"] = "rl";
        rec["epoch"] = per_epoch ? b / per_epoch + 1 : 1;
        rec["batch"] = b;
        report.telemetry.push_back(std::move(rec));
      }
    }
    report.wall_clock_seconds["rl"] = rl_clock.seconds();
    finish_stage("rl", policy);
    if (policies) policies->rl = policy;

    StageClock rec_clock;
    const auto recover = run_sft_stage(policy, world, cfg.stages.recover_epochs,
                                       cfg.stages.recover_learning_rate, cfg.stages.recover_batch_size,
                                       mix_seed(cfg.seed, 3));
    for (std::size_t e = 0; e < recover.epoch_nll.size(); ++e) {
      report.telemetry.push_back(json{{"stage", "recover"}, {"epoch", e + 1}, {"nll", recover.epoch_nll[e]}});
    }
    report.wall_clock_seconds["recover"] = rec_clock.seconds();
    finish_stage("sgsrl", policy);
    if (policies) policies->final_policy = policy;

    const auto wr = pairwise_winrate(policy, policies ? policies->sft : reference, world.corpus.dev,
                                     world.lexicon, cfg.reward);
    report.summary["winrate_sgsrl_vs_sft"] = json{{"wins", wr.wins}, {"ties", wr.ties}, {"losses", wr.losses}};
    report.complete = true;
    report.summary["complete"] = true;
    write_outputs();
  } catch (...) {
    report.summary["complete"] = false;
    write_outputs();
    throw;
  }
  return report;
}

VariantComparison compare_variants(const PipelineConfig& base, const std::vector<std::string>& variants,
                                   std::uint64_t seed) {
  for (const auto& v : variants) {
    if (std::find(variant_names().begin(), variant_names().end(), v) == variant_names().end()) {
      throw ConfigError("unknown variant: " + v);
    }
  }
  const World world = load_world(base.corpus);
  ToyPolicy sft_policy = initial_policy(world, base.stages);
  run_sft_stage(sft_policy, world, base.stages.sft_epochs, base.stages.sft_learning_rate,
                base.stages.sft_batch_size, mix_seed(seed, 1));

  VariantComparison out;
  out.gold_mean_length = gold_mean_length(world.corpus.dev);
  out.sft_metrics = evaluate(sft_policy, world.corpus.dev, world.lexicon, base.reward);
  const auto scorer = make_scorer(base.scorer, world, seed);
  for (const auto& v : variants) {
    ToyPolicy policy = sft_policy;
    run_rl_stage(policy, sft_policy, world, base, v, *scorer, mix_seed(seed, 2));
    out.rows.push_back({v, evaluate(policy, world.corpus.dev, world.lexicon, base.reward)});
  }
  return out;
}

json comparison_to_json(const VariantComparison& c) {
  json rows = json::array();
  for (const auto& r : c.rows) rows.push_back(json{{"variant", r.variant}, {"dev", metrics_to_json(r.metrics)}});
  return json{{"gold_mean_length", c.gold_mean_length}, {"sft", metrics_to_json(c.sft_metrics)}, {"variants", rows}};
}

}  // namespace sgsrl
