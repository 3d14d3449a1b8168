#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <tuple>

#include "cglab/rewards.hpp"
#include "cglab/world.hpp"

using namespace cglab;

namespace {

const VocabSpec kVocab{};

double hash_set_repetition(const TokenSeq& s) {
  if (s.size() < 3) return 0.0;
  std::set<std::tuple<Token, Token, Token>> seen;
  for (size_t i = 0; i + 2 < s.size(); ++i) seen.insert({s[i], s[i + 1], s[i + 2]});
  const double total = static_cast<double>(s.size() - 2);
  return 1.0 - seen.size() / total;
}

TokenSeq concepts(std::initializer_list<int> idx) {
  TokenSeq out;
  for (int c : idx) out.push_back(kVocab.concept_token(0, c));
  return out;
}

TokenSeq wrap(const TokenSeq& body, Token verdict) {
  TokenSeq out{tok::kThinkOpen};
  out.insert(out.end(), body.begin(), body.end());
  out.insert(out.end(), {tok::kThinkClose, verdict, tok::kEos});
  return out;
}

}  // namespace

TEST_CASE("trigram repetition") {
  CHECK(trigram_repetition(TokenSeq{1, 2, 3, 4, 5}) == 0.0);
  CHECK(trigram_repetition(TokenSeq{9, 9, 9, 9, 9}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(trigram_repetition(TokenSeq{1, 2}) == 0.0);
  CHECK(trigram_repetition(TokenSeq{}) == 0.0);
  CHECK(ngram_repetition(TokenSeq{1, 1, 1}, 1) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("trigram repetition agrees with a hash-set count") {
  std::mt19937_64 g(12);
  for (int trial = 0; trial < 10000; ++trial) {
    TokenSeq s(std::uniform_int_distribution<int>(0, 30)(g));
    const int alphabet = 1 + trial % 5;
    for (auto& t : s) t = std::uniform_int_distribution<int>(0, alphabet)(g);
    REQUIRE(trigram_repetition(s) == hash_set_repetition(s));
  }
}

TEST_CASE("length reward values") {
  CHECK(length_reward(512, 512) == 1.0);
  CHECK(std::abs(length_reward(256, 512) - 0.7071067811865476) <= 1e-15);
  CHECK(std::abs(length_reward(1024, 512)) <= 1e-12);
  CHECK(length_reward(0, 24) == 0.0);
}

TEST_CASE("length reward is unimodal with its peak at L_best") {
  const int l_best = 5000;
  double prev = length_reward(0, l_best);
  for (int l = 1; l <= 2 * l_best; ++l) {
    const double r = length_reward(l, l_best);
    if (l <= l_best)
      REQUIRE(r > prev);
    else
      REQUIRE(r < prev);
    prev = r;
  }
  CHECK(length_reward(l_best, l_best) == 1.0);
}

TEST_CASE("diversity reward values and monotonicity") {
  CHECK(std::abs(diversity_reward(0.0) - 1.0) <= 1e-12);
  CHECK(std::abs(diversity_reward(1.0)) <= 1e-15);
  CHECK(std::abs(diversity_reward(0.5) - 0.2928932188134525) <= 1e-15);
  double prev = diversity_reward(0.0);
  for (int i = 1; i <= 10000; ++i) {
    const double r = diversity_reward(i / 10000.0);
    REQUIRE(r <= prev);
    prev = r;
  }
  CHECK_THROWS_AS(diversity_reward(-0.01), DomainError);
  CHECK_THROWS_AS(diversity_reward(1.01), DomainError);
}

TEST_CASE("format validation") {
  TokenSeq good = wrap(concepts({1, 2, 3}), tok::kVerdictSafe);
  CHECK(format_reward(good, kVocab) == 1);
  CHECK(format_reward(wrap({}, tok::kVerdictSafe), kVocab) == 1);
  CHECK(format_reward(wrap({tok::kNoRule, kVocab.rule_token(1)}, tok::kVerdictHarmful), kVocab) == 1);

  TokenSeq no_close = good;
  no_close.erase(no_close.end() - 3);
  CHECK(format_reward(no_close, kVocab) == 0);

  TokenSeq verdict_inside{tok::kThinkOpen, tok::kVerdictSafe, tok::kThinkClose, tok::kEos};
  CHECK(format_reward(verdict_inside, kVocab) == 0);
  CHECK(format_reward(TokenSeq{}, kVocab) == 0);

  TokenSeq no_eos(good.begin(), good.end() - 1);
  CHECK(format_reward(no_eos, kVocab) == 0);
  TokenSeq nested = wrap({tok::kThinkOpen}, tok::kVerdictSafe);
  CHECK(format_reward(nested, kVocab) == 0);
  TokenSeq trailing = good;
  trailing.push_back(tok::kEos);
  CHECK(format_reward(trailing, kVocab) == 0);
}

TEST_CASE("verdict extraction and accuracy") {
  TokenSeq h = wrap(concepts({1}), tok::kVerdictHarmful);
  CHECK(extract_verdict(h, kVocab) == Verdict::kHarmful);
  CHECK(accuracy_reward(h, Verdict::kHarmful, kVocab) == 1);
  TokenSeq s = wrap(concepts({1}), tok::kVerdictSafe);
  CHECK(accuracy_reward(s, Verdict::kHarmful, kVocab) == 0);
  TokenSeq broken{tok::kThinkOpen, tok::kVerdictHarmful, tok::kEos};
  CHECK(extract_verdict(broken, kVocab) == Verdict::kInvalid);
  CHECK(accuracy_reward(broken, Verdict::kHarmful, kVocab) == 0);
  CHECK(accuracy_reward(broken, Verdict::kSafe, kVocab) == 0);
}

TEST_CASE("score_output composes the components") {
  RewardConfig cfg;
  TokenSeq body = concepts({1, 2, 3, 4, 5, 1, 2, 3});
  body.push_back(tok::kNoRule);
  cfg.l_best = static_cast<int>(body.size());
  TokenSeq out = wrap(body, tok::kVerdictSafe);
  auto r = score_output(out, Verdict::kSafe, cfg, kVocab);
  const double p = hash_set_repetition(body);
  CHECK(r.repetition_p == p);
  CHECK(r.reasoning_length == 9);
  CHECK(r.total == doctest::Approx(1 + 1 + 1.0 + (std::sin((p - 2) * std::numbers::pi / 2) + 1)).epsilon(1e-14));

  auto empty = score_output(wrap({}, tok::kVerdictSafe), Verdict::kSafe, cfg, kVocab);
  CHECK(empty.format == 1);
  CHECK(empty.accuracy == 1);
  CHECK(empty.reasoning_length == 0);
  CHECK(empty.length_reward == 0.0);
}

TEST_CASE("a degenerate loop earns nothing from length or diversity") {
  RewardConfig cfg;
  TokenSeq loop;
  while (static_cast<int>(loop.size()) < 2 * cfg.l_best) loop.push_back(kVocab.concept_token(0, 3));
  auto r = score_output(loop, Verdict::kSafe, cfg, kVocab);
  CHECK(r.format == 0);
  CHECK(r.reasoning_length == 2 * cfg.l_best);
  CHECK(std::abs(r.length_reward) <= 1e-12);
  CHECK(r.diversity_reward < 0.01);
}

TEST_CASE("invalid outputs fall back to the whole output minus EOS") {
  TokenSeq out = concepts({1, 2, 3});
  out.push_back(tok::kEos);
  auto body = reasoning_section(out, kVocab);
  CHECK(body.size() == 3);
  TokenSeq valid = wrap(concepts({1, 2}), tok::kVerdictSafe);
  CHECK(reasoning_section(valid, kVocab).size() == 2);
}

TEST_CASE("total is linear in each weight") {
  TokenSeq out = wrap(concepts({1, 2, 3, 4, 1, 2, 3}), tok::kVerdictHarmful);
  RewardConfig base;
  base.l_best = 10;
  auto r0 = score_output(out, Verdict::kHarmful, base, kVocab);
  for (double w : {0.0, 0.5, 2.0, 3.5}) {
    RewardConfig c = base;
    c.w_length = w;
    auto r = score_output(out, Verdict::kHarmful, c, kVocab);
    CHECK(r.total == doctest::Approx(r0.total + (w - 1.0) * r0.length_reward).epsilon(1e-14));
    c = base;
    c.w_diversity = w;
    r = score_output(out, Verdict::kHarmful, c, kVocab);
    CHECK(r.total == doctest::Approx(r0.total + (w - 1.0) * r0.diversity_reward).epsilon(1e-14));
    c = base;
    c.w_format = w;
    c.w_accuracy = w;
    r = score_output(out, Verdict::kHarmful, c, kVocab);
    CHECK(r.total == doctest::Approx(r0.total + 2 * (w - 1.0)).epsilon(1e-14));
  }
}

TEST_CASE("gated total") {
  RewardConfig cfg;
  cfg.gate_on_format = true;
  TokenSeq invalid = concepts({1, 2, 3, 4});
  auto r = score_output(invalid, Verdict::kSafe, cfg, kVocab);
  CHECK(r.total == 0.0);
  cfg.gate_on_format = false;
  CHECK(score_output(invalid, Verdict::kSafe, cfg, kVocab).total > 0.0);
}

TEST_CASE("reward config validation") {
  RewardConfig c;
  CHECK(c.max_generation_length() == 48);
  c.l_best = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
