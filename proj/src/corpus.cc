// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sgsrl/corpus.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

#include "sgsrl/errors.h"
#include "sgsrl/rng.h"

namespace sgsrl {

using nlohmann::json;

std::string source_symbol(std::size_t k) { return "s" + std::to_string(k); }
std::string target_symbol(std::size_t k) { return "t" + std::to_string(k); }
std::string neutral_symbol(std::size_t k) { return "n" + std::to_string(k); }

namespace {

bool has_numeric_suffix(const std::string& token) {
  return token.size() > 1 &&
         std::all_of(token.begin() + 1, token.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

}  // namespace

SymbolClass classify_symbol(const std::string& token) {
  if (has_numeric_suffix(token)) {
    if (token[0] == 't') return SymbolClass::kTarget;
    if (token[0] == 's') return SymbolClass::kSource;
  }
  return SymbolClass::kNeutral;
}

Lexicon::Lexicon(std::uint64_t seed, std::vector<std::string> source_lexemes,
                 std::vector<std::string> target_lexemes, std::vector<std::string> fillers,
                 std::vector<std::string> neutrals)
    : seed_(seed),
      source_lexemes_(std::move(source_lexemes)),
      target_lexemes_(std::move(target_lexemes)),
      fillers_(std::move(fillers)),
      neutrals_(std::move(neutrals)) {
  if (source_lexemes_.size() != target_lexemes_.size()) {
    throw std::invalid_argument("lexicon: source/target lexeme counts differ");
  }
  for (std::size_t c = 0; c < source_lexemes_.size(); ++c) {
    if (!by_source_.emplace(source_lexemes_[c], c).second ||
        !by_target_.emplace(target_lexemes_[c], c).second) {
      throw std::invalid_argument("lexicon: concept lexemes must be unique");
    }
  }
}

std::optional<std::size_t> Lexicon::concept_of_source(const std::string& token) const {
  auto it = by_source_.find(token);
  if (it == by_source_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Lexicon::concept_of_target(const std::string& token) const {
  auto it = by_target_.find(token);
  if (it == by_target_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Lexicon::source_inventory() const {
  std::vector<std::string> out = source_lexemes_;
  out.insert(out.end(), fillers_.begin(), fillers_.end());
  return out;
}

std::vector<std::string> Lexicon::joint_vocabulary() const {
  std::set<std::string> all(source_lexemes_.begin(), source_lexemes_.end());
  all.insert(fillers_.begin(), fillers_.end());
  all.insert(target_lexemes_.begin(), target_lexemes_.end());
  all.insert(neutrals_.begin(), neutrals_.end());
  return {all.begin(), all.end()};
}

std::size_t default_filler_count(std::size_t n_concepts) { return std::max<std::size_t>(1, n_concepts / 5); }

Lexicon build_lexicon(std::uint64_t seed, std::size_t n_concepts, std::size_t n_neutral) {
  if (n_concepts == 0) throw std::invalid_argument("build_lexicon: n_concepts must be >= 1");
  Rng rng(mix_seed(seed, 0x1e8));

  const std::size_t n_fillers = default_filler_count(n_concepts);
  std::vector<std::size_t> src(n_concepts + n_fillers);
  std::iota(src.begin(), src.end(), 0);
  rng.shuffle(src);
  std::vector<std::size_t> tgt(n_concepts);
  std::iota(tgt.begin(), tgt.end(), 0);
  rng.shuffle(tgt);

  std::vector<std::string> source_lexemes, target_lexemes, fillers, neutrals;
  for (std::size_t c = 0; c < n_concepts; ++c) {
    source_lexemes.push_back(source_symbol(src[c]));
    target_lexemes.push_back(target_symbol(tgt[c]));
  }
  for (std::size_t f = n_concepts; f < src.size(); ++f) fillers.push_back(source_symbol(src[f]));
  for (std::size_t k = 0; k < n_neutral; ++k) neutrals.push_back(neutral_symbol(k));
  return Lexicon(seed, std::move(source_lexemes), std::move(target_lexemes), std::move(fillers),
                 std::move(neutrals));
}

SourceDoc make_source_doc(Tokens tokens, const Lexicon& lexicon) {
  std::set<std::size_t> concepts;
  for (const auto& t : tokens) {
    if (auto c = lexicon.concept_of_source(t)) concepts.insert(*c);
  }
  return SourceDoc{std::move(tokens), {concepts.begin(), concepts.end()}};
}

Tokens gold_title(const SourceDoc& doc, const Lexicon& lexicon) {
  Tokens out;
  out.reserve(doc.concepts.size());
  for (std::size_t c : doc.concepts) out.push_back(lexicon.target_lexeme(c));
  return out;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Tokens split_tokens(const std::string& text) {
  Tokens out;
  std::istringstream in(text);
  for (std::string t; in >> t;) out.push_back(std::move(t));
  return out;
}

CorpusBundle gen_corpus(const Lexicon& lexicon, const CorpusSpec& spec) {
  if (spec.min_len < 1 || spec.min_len > spec.max_len) {
    throw std::invalid_argument("gen_corpus: need 1 <= min_len <= max_len");
  }
  if (spec.m_source < spec.n_parallel) {
    throw std::invalid_argument("gen_corpus: m_source must be >= n_parallel");
  }
  if (spec.filler_rate < 0.0 || spec.filler_rate >= 1.0) {
    throw std::invalid_argument("gen_corpus: filler_rate must be in [0, 1)");
  }
  Rng rng(mix_seed(spec.seed, lexicon.seed()));
  const std::size_t n_concepts = lexicon.num_concepts();
  const auto& fillers = lexicon.fillers();
  const bool use_fillers = spec.filler_rate > 0.0 && !fillers.empty();

  std::unordered_set<std::string> seen;
  // Bounded rejection sampling: a long run of duplicates means the space is used up.
  const std::size_t max_consecutive_rejects = 10000;

  auto draw_unique = [&]() -> SourceDoc {
    for (std::size_t attempt = 0; attempt < max_consecutive_rejects; ++attempt) {
      const std::size_t k = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
      Tokens tokens;
      std::size_t placed = 0;
      while (placed < k) {
        if (use_fillers && rng.uniform() < spec.filler_rate) {
          tokens.push_back(fillers[rng.below(fillers.size())]);
        } else {
          tokens.push_back(lexicon.source_lexeme(rng.below(n_concepts)));
          ++placed;
        }
      }
      if (seen.insert(join_tokens(tokens)).second) return make_source_doc(std::move(tokens), lexicon);
    }
    throw GenerationExhausted("gen_corpus: could not draw another distinct document");
  };

  CorpusBundle bundle;
  bundle.seed = spec.seed;
  for (std::size_t i = 0; i < spec.n_parallel; ++i) {
    SourceDoc doc = draw_unique();
    Tokens ref = gold_title(doc, lexicon);
    bundle.parallel.push_back({std::move(doc), std::move(ref)});
  }
  for (std::size_t i = 0; i < spec.m_source; ++i) bundle.source_only.push_back(draw_unique());
  for (std::size_t i = 0; i < spec.n_dev; ++i) {
    SourceDoc doc = draw_unique();
    Tokens ref = gold_title(doc, lexicon);
    bundle.dev.push_back({std::move(doc), std::move(ref)});
  }
  return bundle;
}

namespace {

json concept_ids(const SourceDoc& doc, const Lexicon& lexicon) {
  json out = json::array();
  for (std::size_t c : doc.concepts) out.push_back(lexicon.concept_id(c));
  return out;
}

}  // namespace

void write_corpus_jsonl(const std::filesystem::path& path, const CorpusBundle& bundle) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  // Concept ids render as "c<index>"; read_corpus_jsonl cross-checks them.
  auto ids = [](const SourceDoc& doc) {
    json a = json::array();
    for (std::size_t c : doc.concepts) a.push_back("c" + std::to_string(c));
    return a;
  };
  for (const auto& p : bundle.parallel) {
    out << json{{"split", "parallel"}, {"source_tokens", p.source.tokens},
                {"target_tokens", p.target}, {"concepts", ids(p.source)}, {"seed", bundle.seed}}
                .dump()
        << '\n';
  }
  for (const auto& d : bundle.source_only) {
    out << json{{"split", "source_only"}, {"source_tokens", d.tokens}, {"concepts", ids(d)},
                {"seed", bundle.seed}}
                .dump()
        << '\n';
  }
  for (const auto& p : bundle.dev) {
    out << json{{"split", "dev"}, {"source_tokens", p.source.tokens},
                {"target_tokens", p.target}, {"concepts", ids(p.source)}, {"seed", bundle.seed}}
                .dump()
        << '\n';
  }
}

CorpusBundle read_corpus_jsonl(const std::filesystem::path& path, const Lexicon& lexicon) {
  std::ifstream in(path);
  if (!in) throw ConfigError("corpus file not found: " + path.string());
  CorpusBundle bundle;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec = json::parse(line);
    const std::string split = rec.at("split").get<std::string>();
    SourceDoc doc = make_source_doc(rec.at("source_tokens").get<Tokens>(), lexicon);
    if (rec.at("concepts") != concept_ids(doc, lexicon)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": concepts field disagrees with source_tokens");
    }
    bundle.seed = rec.value("seed", std::uint64_t{0});
    if (split == "source_only") {
      bundle.source_only.push_back(std::move(doc));
    } else if (split == "parallel" || split == "dev") {
      ParallelPair pair{std::move(doc), rec.at("target_tokens").get<Tokens>()};
      (split == "dev" ? bundle.dev : bundle.parallel).push_back(std::move(pair));
    } else {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": unknown split " + split);
    }
  }
  return bundle;
}

void write_lexicon(const std::filesystem::path& path, const Lexicon& lexicon) {
  json concepts = json::array();
  for (std::size_t c = 0; c < lexicon.num_concepts(); ++c) {
    concepts.push_back({{"id", lexicon.concept_id(c)},
                        {"source", lexicon.source_lexeme(c)},
                        {"target", lexicon.target_lexeme(c)}});
  }
  json doc{{"seed", lexicon.seed()},
           {"concepts", concepts},
           {"fillers", lexicon.fillers()},
           {"neutral", lexicon.neutral_symbols()}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

Lexicon read_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("lexicon file not found: " + path.string());
  json doc = json::parse(in);
  std::vector<std::string> src, tgt;
  for (const auto& c : doc.at("concepts")) {
    src.push_back(c.at("source").get<std::string>());
    tgt.push_back(c.at("target").get<std::string>());
  }
  return Lexicon(doc.at("seed").get<std::uint64_t>(), std::move(src), std::move(tgt),
                 doc.at("fillers").get<std::vector<std::string>>(),
                 doc.at("neutral").get<std::vector<std::string>>());
}

}  // namespace sgsrl
