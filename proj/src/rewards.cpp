#include "cglab/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace cglab {

void RewardConfig::validate() const {
  if (l_best < 1) throw ConfigError("reward.l_best must be at least 1");
  for (double w : {w_format, w_accuracy, w_length, w_diversity})
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("reward weights must be finite and >= 0");
  if (ngram_order < 1) throw ConfigError("reward.ngram_order must be at least 1");
}

double ngram_repetition(std::span<const Token> tokens, int n) {
  if (n < 1) throw DomainError("n-gram order must be positive");
  if (tokens.size() < static_cast<size_t>(n)) return 0.0;
  const size_t total = tokens.size() - n + 1;
  std::vector<std::span<const Token>> grams;
  grams.reserve(total);
  for (size_t i = 0; i < total; ++i) grams.push_back(tokens.subspan(i, n));
  auto less = [](std::span<const Token> a, std::span<const Token> b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  };
  auto eq = [](std::span<const Token> a, std::span<const Token> b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
  };
  std::sort(grams.begin(), grams.end(), less);
  const size_t distinct = std::unique(grams.begin(), grams.end(), eq) - grams.begin();
  return 1.0 - static_cast<double>(distinct) / static_cast<double>(total);
}

double length_reward(int length, int l_best) {
  if (length < 0 || l_best < 1) throw DomainError("length_reward needs L >= 0 and L_best >= 1");
  return std::sin(static_cast<double>(length) * std::numbers::pi / (2.0 * l_best));
}

double diversity_reward(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("repetition rate must lie in [0, 1]");
  return std::sin((p - 2.0) * std::numbers::pi / 2.0) + 1.0;
}

bool is_format_valid(std::span<const Token> output, const VocabSpec& vocab) {
  const size_t n = output.size();
  if (n < 4) return false;
  if (output[0] != tok::kThinkOpen || output[n - 3] != tok::kThinkClose ||
      !vocab.is_verdict(output[n - 2]) || output[n - 1] != tok::kEos)
    return false;
  for (size_t i = 1; i + 3 < n; ++i) {
    const Token t = output[i];
    if (!(vocab.is_concept(t) || vocab.is_rule(t) || t == tok::kNoRule)) return false;
  }
  return true;
}

int format_reward(std::span<const Token> output, const VocabSpec& vocab) {
  return is_format_valid(output, vocab) ? 1 : 0;
}

Verdict extract_verdict(std::span<const Token> output, const VocabSpec& vocab) {
  if (!is_format_valid(output, vocab)) return Verdict::kInvalid;
  return output[output.size() - 2] == tok::kVerdictHarmful ? Verdict::kHarmful : Verdict::kSafe;
}

int accuracy_reward(std::span<const Token> output, Verdict gold, const VocabSpec& vocab) {
  const Verdict v = extract_verdict(output, vocab);
  return v != Verdict::kInvalid && v == gold ? 1 : 0;
}

std::span<const Token> reasoning_section(std::span<const Token> output, const VocabSpec& vocab) {
  if (is_format_valid(output, vocab)) return output.subspan(1, output.size() - 4);
  if (!output.empty() && output.back() == tok::kEos) return output.first(output.size() - 1);
  return output;
}

RewardBreakdown score_output(std::span<const Token> output, Verdict gold, const RewardConfig& config,
                             const VocabSpec& vocab) {
  RewardBreakdown r;
  r.format = format_reward(output, vocab);
  r.accuracy = accuracy_reward(output, gold, vocab);
  const auto body = reasoning_section(output, vocab);
  r.reasoning_length = static_cast<int>(body.size());
  r.repetition_p = ngram_repetition(body, config.ngram_order);
  r.length_reward = length_reward(r.reasoning_length, config.l_best);
  r.diversity_reward = diversity_reward(r.repetition_p);
  if (config.gate_on_format && r.format == 0) {
    r.total = 0.0;
  } else {
    r.total = config.w_format * r.format + config.w_accuracy * r.accuracy +
              config.w_length * r.length_reward + config.w_diversity * r.diversity_reward;
  }
  return r;
}

RewardBreakdown score_rollout(const Rollout& rollout, Verdict gold, const RewardConfig& config,
                              const VocabSpec& vocab) {
  return score_output(rollout.output_tokens, gold, config, vocab);
}

}  // namespace cglab
