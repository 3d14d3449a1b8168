#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cglab/common.hpp"

namespace cglab {

// Token layout: 7 special tokens, then R rule tokens, then one contiguous
// block of concept tokens per language.
namespace tok {
inline constexpr Token kBos = 0;
inline constexpr Token kEos = 1;
inline constexpr Token kThinkOpen = 2;
inline constexpr Token kThinkClose = 3;
inline constexpr Token kVerdictHarmful = 4;
inline constexpr Token kVerdictSafe = 5;
inline constexpr Token kNoRule = 6;
inline constexpr int kNumSpecial = 7;
}  // namespace tok

struct VocabSpec {
  int num_languages = 6;
  int concepts_per_language = 32;
  int num_rules = 4;

  int size() const { return num_languages * concepts_per_language + num_rules + tok::kNumSpecial; }
  Token rule_token(int rule) const;
  Token language_base(int lang) const;
  Token concept_token(int lang, int concept_index) const;

  bool is_rule(Token t) const { return t >= tok::kNumSpecial && t < tok::kNumSpecial + num_rules; }
  bool is_concept(Token t) const { return t >= tok::kNumSpecial + num_rules && t < size(); }
  bool is_verdict(Token t) const { return t == tok::kVerdictHarmful || t == tok::kVerdictSafe; }
  bool in_vocab(Token t) const { return t >= 0 && t < size(); }
  int rule_of(Token t) const { return t - tok::kNumSpecial; }
  // Language / concept index of a concept token.
  int language_of(Token t) const;
  int concept_of(Token t) const;

  void validate() const;
};

// rules[k] is the set of concept indices harmful under rule k (sorted).
struct RuleSet {
  std::vector<std::vector<int>> rules;

  int size() const { return static_cast<int>(rules.size()); }
  // Rule index the concept belongs to, if any.
  std::optional<int> rule_of(int concept_index) const;
  std::vector<int> safe_concepts(const VocabSpec& vocab) const;
  std::vector<int> match(std::span<const int> concepts) const;

  // Throws ConfigError for overlapping rules, out-of-range concepts, a rule
  // count that disagrees with the vocabulary, or no safe concept.
  void validate(const VocabSpec& vocab) const;
};

RuleSet make_rules(const VocabSpec& vocab, int concepts_per_rule, std::uint64_t seed);

struct BaseSample {
  std::int64_t sample_id = 0;
  std::vector<int> concepts;
  Verdict gold_verdict = Verdict::kSafe;
  std::vector<int> matched_rules;  // ascending

  bool operator==(const BaseSample&) const = default;
};

struct SurfaceSample {
  std::int64_t sample_id = 0;
  int language = 0;
  TokenSeq prompt_tokens;
  Verdict gold_verdict = Verdict::kSafe;
};

struct TeacherDemo {
  SurfaceSample surface;
  TokenSeq demo_tokens;
};

// Shape of generated samples; defaults put teacher reasoning lengths around
// the desk L_best of 24.
struct CorpusShape {
  int min_concepts = 16;
  int max_concepts = 23;
  int max_rules_per_sample = 2;
};

std::vector<BaseSample> gen_corpus(const VocabSpec& vocab, const RuleSet& rules, int n,
                                   double harmful_fraction, std::uint64_t seed,
                                   const CorpusShape& shape = {});

SurfaceSample translate(const BaseSample& sample, int lang, const VocabSpec& vocab);

// Inverse of translate on the concept segment; throws DomainError if a token
// is not a concept token of the given language.
std::vector<int> decode_concepts(std::span<const Token> prompt_tokens, int lang,
                                 const VocabSpec& vocab);

TeacherDemo make_teacher_demo(const SurfaceSample& surface, const RuleSet& rules,
                              const VocabSpec& vocab);

// Every sample translated into `lang`, in corpus order.
std::vector<SurfaceSample> translate_all(std::span<const BaseSample> corpus, int lang,
                                         const VocabSpec& vocab);

}  // namespace cglab
