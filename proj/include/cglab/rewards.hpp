#pragma once

#include <span>

#include "cglab/common.hpp"
#include "cglab/policy.hpp"
#include "cglab/world.hpp"

namespace cglab {

struct RewardConfig {
  int l_best = 24;
  double w_format = 1.0;
  double w_accuracy = 1.0;
  double w_length = 1.0;
  double w_diversity = 1.0;
  // When set, a format-invalid output scores only its (zero) format term.
  bool gate_on_format = false;
  int ngram_order = 3;

  // Generation cap that keeps the length reward non-negative.
  int max_generation_length() const { return 2 * l_best; }
  void validate() const;
};

// p = 1 - distinct/total n-grams; 0 when there are no n-grams.
double ngram_repetition(std::span<const Token> tokens, int n);
inline double trigram_repetition(std::span<const Token> tokens) { return ngram_repetition(tokens, 3); }

// sin(L * pi / (2 * L_best))
double length_reward(int length, int l_best);
// sin((p - 2) * pi / 2) + 1, p in [0, 1]
double diversity_reward(double p);

// THINK_OPEN, body, THINK_CLOSE, verdict, EOS. The body may hold concept
// tokens, rule tokens, and NO_RULE (the teacher's "no rule matched" marker).
bool is_format_valid(std::span<const Token> output, const VocabSpec& vocab);
int format_reward(std::span<const Token> output, const VocabSpec& vocab);

Verdict extract_verdict(std::span<const Token> output, const VocabSpec& vocab);
int accuracy_reward(std::span<const Token> output, Verdict gold, const VocabSpec& vocab);

// Tokens the length and diversity terms are measured over: the think section
// when the format is valid, otherwise the whole output minus a trailing EOS.
std::span<const Token> reasoning_section(std::span<const Token> output, const VocabSpec& vocab);

RewardBreakdown score_output(std::span<const Token> output, Verdict gold, const RewardConfig& config,
                             const VocabSpec& vocab);
RewardBreakdown score_rollout(const Rollout& rollout, Verdict gold, const RewardConfig& config,
                              const VocabSpec& vocab);

}  // namespace cglab
