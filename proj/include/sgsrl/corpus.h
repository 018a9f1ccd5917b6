// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic bilingual world: a concept lexicon with disjoint source, target and
// neutral symbol inventories, and the parallel / source-only / dev splits drawn
// from it.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sgsrl {

using Tokens = std::vector<std::string>;

enum class SymbolClass { kTarget, kSource, kNeutral };

// Rendering convention: source "s<k>", target "t<k>", neutral "n<k>".
std::string source_symbol(std::size_t k);
std::string target_symbol(std::size_t k);
std::string neutral_symbol(std::size_t k);

// Total classifier over token strings. Anything that is not a well-formed
// source or target symbol counts as neutral.
SymbolClass classify_symbol(const std::string& token);

class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(std::uint64_t seed, std::vector<std::string> source_lexemes,
          std::vector<std::string> target_lexemes, std::vector<std::string> fillers,
          std::vector<std::string> neutrals);

  std::size_t num_concepts() const { return source_lexemes_.size(); }
  std::string concept_id(std::size_t c) const { return "c" + std::to_string(c); }
  const std::string& source_lexeme(std::size_t c) const { return source_lexemes_.at(c); }
  const std::string& target_lexeme(std::size_t c) const { return target_lexemes_.at(c); }
  const std::vector<std::string>& source_lexemes() const { return source_lexemes_; }
  const std::vector<std::string>& target_lexemes() const { return target_lexemes_; }
  const std::vector<std::string>& fillers() const { return fillers_; }
  const std::vector<std::string>& neutral_symbols() const { return neutrals_; }
  std::uint64_t seed() const { return seed_; }

  std::optional<std::size_t> concept_of_source(const std::string& token) const;
  std::optional<std::size_t> concept_of_target(const std::string& token) const;

  // Source inventory = concept lexemes + fillers.
  std::vector<std::string> source_inventory() const;
  // Sorted, deduplicated union of all three inventories.
  std::vector<std::string> joint_vocabulary() const;

  bool operator==(const Lexicon& o) const {
    return seed_ == o.seed_ && source_lexemes_ == o.source_lexemes_ &&
           target_lexemes_ == o.target_lexemes_ && fillers_ == o.fillers_ &&
           neutrals_ == o.neutrals_;
  }

 private:
  std::uint64_t seed_ = 0;
  std::vector<std::string> source_lexemes_;
  std::vector<std::string> target_lexemes_;
  std::vector<std::string> fillers_;
  std::vector<std::string> neutrals_;
  std::unordered_map<std::string, std::size_t> by_source_;
  std::unordered_map<std::string, std::size_t> by_target_;
};

// Number of filler symbols added to the source inventory for a given lexicon size.
std::size_t default_filler_count(std::size_t n_concepts);

Lexicon build_lexicon(std::uint64_t seed, std::size_t n_concepts, std::size_t n_neutral);

struct SourceDoc {
  Tokens tokens;
  // Distinct concepts mentioned, ascending.
  std::vector<std::size_t> concepts;

  bool operator==(const SourceDoc& o) const { return tokens == o.tokens && concepts == o.concepts; }
};

// Builds a SourceDoc from raw tokens, deriving the concept set.
SourceDoc make_source_doc(Tokens tokens, const Lexicon& lexicon);

// The concise reference: distinct concepts' target lexemes in lexicon order.
Tokens gold_title(const SourceDoc& doc, const Lexicon& lexicon);

struct ParallelPair {
  SourceDoc source;
  Tokens target;

  bool operator==(const ParallelPair& o) const { return source == o.source && target == o.target; }
};

struct CorpusBundle {
  std::vector<ParallelPair> parallel;
  std::vector<SourceDoc> source_only;
  std::vector<ParallelPair> dev;
  std::uint64_t seed = 0;

  bool operator==(const CorpusBundle& o) const {
    return parallel == o.parallel && source_only == o.source_only && dev == o.dev &&
           seed == o.seed;
  }
};

struct CorpusSpec {
  std::size_t n_parallel = 200;
  std::size_t m_source = 2000;
  std::size_t n_dev = 200;
  std::size_t min_len = 3;  // concept tokens per document
  std::size_t max_len = 10;
  double filler_rate = 0.2;
  std::uint64_t seed = 7;
};

CorpusBundle gen_corpus(const Lexicon& lexicon, const CorpusSpec& spec);

// Line-delimited corpus plus a sidecar lexicon file.
void write_corpus_jsonl(const std::filesystem::path& path, const CorpusBundle& bundle);
CorpusBundle read_corpus_jsonl(const std::filesystem::path& path, const Lexicon& lexicon);
void write_lexicon(const std::filesystem::path& path, const Lexicon& lexicon);
Lexicon read_lexicon(const std::filesystem::path& path);

std::string join_tokens(const Tokens& tokens);
Tokens split_tokens(const std::string& text);

}  // namespace sgsrl
