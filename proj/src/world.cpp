#include "cglab/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cglab/rng.hpp"

namespace cglab {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kHarmful: return "HARMFUL";
    case Verdict::kSafe: return "SAFE";
    case Verdict::kInvalid: return "INVALID";
  }
  return "INVALID";
}

Verdict verdict_from_string(std::string_view s) {
  if (s == "HARMFUL") return Verdict::kHarmful;
  if (s == "SAFE") return Verdict::kSafe;
  if (s == "INVALID") return Verdict::kInvalid;
  throw DomainError("unknown verdict '" + std::string(s) + "'");
}

Token VocabSpec::rule_token(int rule) const {
  if (rule < 0 || rule >= num_rules) throw DomainError("rule index out of range");
  return tok::kNumSpecial + rule;
}

Token VocabSpec::language_base(int lang) const {
  if (lang < 0 || lang >= num_languages)
    throw DomainError("language " + std::to_string(lang) + " out of range");
  return tok::kNumSpecial + num_rules + lang * concepts_per_language;
}

Token VocabSpec::concept_token(int lang, int concept_index) const {
  if (concept_index < 0 || concept_index >= concepts_per_language)
    throw DomainError("concept index out of range");
  return language_base(lang) + concept_index;
}

int VocabSpec::language_of(Token t) const {
  if (!is_concept(t)) throw DomainError("not a concept token");
  return (t - tok::kNumSpecial - num_rules) / concepts_per_language;
}

int VocabSpec::concept_of(Token t) const {
  if (!is_concept(t)) throw DomainError("not a concept token");
  return (t - tok::kNumSpecial - num_rules) % concepts_per_language;
}

void VocabSpec::validate() const {
  if (num_languages < 1 || concepts_per_language < 1 || num_rules < 0)
    throw ConfigError("vocabulary counts must be positive");
}

std::optional<int> RuleSet::rule_of(int concept_index) const {
  for (int k = 0; k < size(); ++k)
    if (std::binary_search(rules[k].begin(), rules[k].end(), concept_index)) return k;
  return std::nullopt;
}

std::vector<int> RuleSet::safe_concepts(const VocabSpec& vocab) const {
  std::vector<int> out;
  for (int c = 0; c < vocab.concepts_per_language; ++c)
    if (!rule_of(c)) out.push_back(c);
  return out;
}

std::vector<int> RuleSet::match(std::span<const int> concepts) const {
  std::vector<int> out;
  for (int k = 0; k < size(); ++k) {
    bool hit = std::any_of(concepts.begin(), concepts.end(), [&](int c) {
      return std::binary_search(rules[k].begin(), rules[k].end(), c);
    });
    if (hit) out.push_back(k);
  }
  return out;
}

void RuleSet::validate(const VocabSpec& vocab) const {
  vocab.validate();
  if (size() != vocab.num_rules)
    throw ConfigError("rule set has " + std::to_string(size()) + " rules, vocabulary expects " +
                      std::to_string(vocab.num_rules));
  std::vector<int> owner(vocab.concepts_per_language, -1);
  for (int k = 0; k < size(); ++k) {
    if (!std::is_sorted(rules[k].begin(), rules[k].end()))
      throw ConfigError("rule concept set must be sorted");
    for (int c : rules[k]) {
      if (c < 0 || c >= vocab.concepts_per_language)
        throw ConfigError("rule concept out of range");
      if (owner[c] != -1) throw ConfigError("rule concept sets overlap");
      owner[c] = k;
    }
  }
  if (std::find(owner.begin(), owner.end(), -1) == owner.end())
    throw ConfigError("every concept is harmful; no SAFE samples possible");
}

RuleSet make_rules(const VocabSpec& vocab, int concepts_per_rule, std::uint64_t seed) {
  vocab.validate();
  if (concepts_per_rule < 1 ||
      static_cast<long>(concepts_per_rule) * vocab.num_rules >= vocab.concepts_per_language)
    throw ConfigError("concepts_per_rule leaves no safe concept");
  std::vector<int> perm(vocab.concepts_per_language);
  std::iota(perm.begin(), perm.end(), 0);
  RngStream rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  RuleSet out;
  out.rules.resize(vocab.num_rules);
  for (int k = 0; k < vocab.num_rules; ++k) {
    auto first = perm.begin() + k * concepts_per_rule;
    out.rules[k].assign(first, first + concepts_per_rule);
    std::sort(out.rules[k].begin(), out.rules[k].end());
  }
  return out;
}

std::vector<BaseSample> gen_corpus(const VocabSpec& vocab, const RuleSet& rules, int n,
                                   double harmful_fraction, std::uint64_t seed,
                                   const CorpusShape& shape) {
  rules.validate(vocab);
  if (n < 1) throw DomainError("corpus size must be at least 1");
  if (!(harmful_fraction >= 0.0 && harmful_fraction <= 1.0))
    throw DomainError("harmful_fraction must lie in [0, 1]");
  if (shape.min_concepts < 1 || shape.max_concepts < shape.min_concepts)
    throw ConfigError("invalid concept-count range");
  if (shape.max_rules_per_sample < 1 || shape.max_rules_per_sample > shape.min_concepts)
    throw ConfigError("invalid max_rules_per_sample");
  const long n_harmful = std::lround(n * harmful_fraction);
  if (n_harmful > 0 && rules.size() == 0) throw ConfigError("harmful samples need rules");

  RngStream rng(seed);
  std::vector<char> harmful(n, 0);
  std::fill(harmful.begin(), harmful.begin() + n_harmful, 1);
  std::shuffle(harmful.begin(), harmful.end(), rng.engine());

  const std::vector<int> safe = rules.safe_concepts(vocab);
  std::vector<int> rule_ids(rules.size());
  std::iota(rule_ids.begin(), rule_ids.end(), 0);

  std::vector<BaseSample> corpus;
  corpus.reserve(n);
  for (int i = 0; i < n; ++i) {
    BaseSample s;
    s.sample_id = i;
    const int len = shape.min_concepts +
                    static_cast<int>(rng.below(shape.max_concepts - shape.min_concepts + 1));
    if (harmful[i]) {
      const int max_k = std::min(shape.max_rules_per_sample, rules.size());
      const int k = 1 + static_cast<int>(rng.below(max_k));
      std::shuffle(rule_ids.begin(), rule_ids.end(), rng.engine());
      for (int j = 0; j < k; ++j) {
        const auto& pool = rules.rules[rule_ids[j]];
        s.concepts.push_back(pool[rng.below(pool.size())]);
      }
    }
    while (static_cast<int>(s.concepts.size()) < len) s.concepts.push_back(safe[rng.below(safe.size())]);
    std::shuffle(s.concepts.begin(), s.concepts.end(), rng.engine());
    s.matched_rules = rules.match(s.concepts);
    s.gold_verdict = s.matched_rules.empty() ? Verdict::kSafe : Verdict::kHarmful;
    corpus.push_back(std::move(s));
  }
  return corpus;
}

SurfaceSample translate(const BaseSample& sample, int lang, const VocabSpec& vocab) {
  const Token base = vocab.language_base(lang);
  SurfaceSample out;
  out.sample_id = sample.sample_id;
  out.language = lang;
  out.gold_verdict = sample.gold_verdict;
  out.prompt_tokens.reserve(sample.concepts.size() + 1);
  out.prompt_tokens.push_back(tok::kBos);
  for (int c : sample.concepts) {
    if (c < 0 || c >= vocab.concepts_per_language) throw DomainError("concept index out of range");
    out.prompt_tokens.push_back(base + c);
  }
  return out;
}

std::vector<int> decode_concepts(std::span<const Token> prompt_tokens, int lang,
                                 const VocabSpec& vocab) {
  if (prompt_tokens.empty() || prompt_tokens.front() != tok::kBos)
    throw DomainError("prompt must start with BOS");
  std::vector<int> out;
  out.reserve(prompt_tokens.size() - 1);
  for (Token t : prompt_tokens.subspan(1)) {
    if (!vocab.is_concept(t) || vocab.language_of(t) != lang)
      throw DomainError("token is not a concept of language " + std::to_string(lang));
    out.push_back(vocab.concept_of(t));
  }
  return out;
}

TeacherDemo make_teacher_demo(const SurfaceSample& surface, const RuleSet& rules,
                              const VocabSpec& vocab) {
  const std::vector<int> concepts = decode_concepts(surface.prompt_tokens, surface.language, vocab);
  const std::vector<int> matched = rules.match(concepts);

  TeacherDemo demo{surface, {}};
  TokenSeq& out = demo.demo_tokens;
  out.push_back(tok::kThinkOpen);
  // understanding: echo the prompt in its own language
  out.insert(out.end(), surface.prompt_tokens.begin() + 1, surface.prompt_tokens.end());
  // rule matching
  if (matched.empty()) {
    out.push_back(tok::kNoRule);
  } else {
    for (int k : matched) out.push_back(vocab.rule_token(k));
  }
  out.push_back(tok::kThinkClose);
  // judging
  out.push_back(matched.empty() ? tok::kVerdictSafe : tok::kVerdictHarmful);
  out.push_back(tok::kEos);
  return demo;
}

std::vector<SurfaceSample> translate_all(std::span<const BaseSample> corpus, int lang,
                                         const VocabSpec& vocab) {
  std::vector<SurfaceSample> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(translate(s, lang, vocab));
  return out;
}

}  // namespace cglab
