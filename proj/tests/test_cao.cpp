#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cglab/cao.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cglab;

namespace {

const VocabSpec kVocab = cglab::testing::small_vocab();

TokenSeq answer(std::span<const Token> prompt, Token verdict, bool valid = true) {
  TokenSeq out{tok::kThinkOpen};
  out.insert(out.end(), prompt.begin() + 1, prompt.end());
  out.push_back(tok::kNoRule);
  if (valid) out.push_back(tok::kThinkClose);
  out.insert(out.end(), {verdict, tok::kEos});
  return out;
}

Verdict other(Verdict v) { return v == Verdict::kHarmful ? Verdict::kSafe : Verdict::kHarmful; }
Token verdict_token(Verdict v) { return v == Verdict::kHarmful ? tok::kVerdictHarmful : tok::kVerdictSafe; }

AlignmentQuadruple make_quad(std::int64_t id, std::vector<int> concepts, Verdict gold, int fail_lang,
                             int ok_lang) {
  BaseSample b{id, std::move(concepts), gold, {}};
  auto qf = translate(b, fail_lang, kVocab).prompt_tokens;
  auto qa = translate(b, ok_lang, kVocab).prompt_tokens;
  AlignmentQuadruple q;
  q.sample_id = id;
  q.failure_lang = fail_lang;
  q.success_lang = ok_lang;
  q.gold = gold;
  q.input = qf;
  q.rejected = answer(qf, verdict_token(other(gold)));
  q.chosen = answer(qa, verdict_token(gold));
  q.anchor = qa;
  q.anchor_prompt_len = static_cast<int>(qa.size());
  q.anchor.insert(q.anchor.end(), q.chosen.begin(), q.chosen.end());
  check_quadruple(q, kVocab);
  return q;
}

std::vector<AlignmentQuadruple> quads() {
  return {make_quad(0, {1, 2, 3}, Verdict::kSafe, 1, 0), make_quad(1, {4, 0}, Verdict::kHarmful, 2, 0),
          make_quad(2, {5, 6, 7, 1}, Verdict::kSafe, 0, 2), make_quad(3, {2, 2}, Verdict::kHarmful, 1, 2)};
}

ScoredOutput scored(std::int64_t id, int lang, int index, Verdict gold, bool success, double total) {
  BaseSample b{id, {static_cast<int>(id % 8), 3}, gold, {}};
  ScoredOutput o;
  o.sample_id = id;
  o.language = lang;
  o.index = index;
  o.gold = gold;
  o.prompt = translate(b, lang, kVocab).prompt_tokens;
  o.output = success ? answer(o.prompt, verdict_token(gold))
                     : (index % 2 ? answer(o.prompt, verdict_token(other(gold)))
                                  : answer(o.prompt, verdict_token(gold), false));
  o.reward.total = total;
  o.success = success;
  return o;
}

}  // namespace

TEST_CASE("a failure paired with the only success") {
  std::vector<ScoredOutput> t{scored(0, 0, 0, Verdict::kHarmful, true, 3.0),
                              scored(0, 2, 0, Verdict::kHarmful, false, 1.0)};
  auto ps = pair_outputs(t, kVocab);
  REQUIRE(ps.quadruples.size() == 1);
  CHECK(ps.quadruples[0].failure_lang == 2);
  CHECK(ps.quadruples[0].success_lang == 0);
  CHECK(ps.failures == 1);
  CHECK(ps.successes == 1);
}

TEST_CASE("a sample wrong everywhere yields nothing") {
  std::vector<ScoredOutput> t{scored(4, 0, 0, Verdict::kSafe, false, 1.0),
                              scored(4, 1, 1, Verdict::kSafe, false, 0.5)};
  auto ps = pair_outputs(t, kVocab);
  CHECK(ps.quadruples.empty());
  CHECK(ps.skipped == 2);
}

TEST_CASE("pairing matches brute-force enumeration on random micro instances") {
  std::mt19937_64 g(5);
  const double totals[] = {1.0, 2.0, 2.5, 3.0};
  int nonempty = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ScoredOutput> t;
    for (int id = 0; id < 5; ++id) {
      const Verdict gold = id % 2 ? Verdict::kHarmful : Verdict::kSafe;
      for (int lang = 0; lang < 3; ++lang)
        for (int k = 0; k < 2; ++k) t.push_back(scored(id, lang, k, gold, g() % 3 == 0, totals[g() % 4]));
    }
    std::shuffle(t.begin(), t.end(), g);
    auto ps = pair_outputs(t, kVocab);
    std::sort(t.begin(), t.end(), [](const ScoredOutput& a, const ScoredOutput& b) {
      return std::tie(a.sample_id, a.language, a.index) < std::tie(b.sample_id, b.language, b.index);
    });
    int skipped = 0;
    auto expect = cglab::testing::brute_force_pairs(t, skipped);
    REQUIRE(ps.quadruples == expect);
    REQUIRE(ps.skipped == skipped);
    nonempty += !expect.empty();
  }
  CHECK(nonempty > 200);
}

TEST_CASE("quadruple invariants") {
  auto q = make_quad(0, {1, 2}, Verdict::kSafe, 1, 0);
  auto bad = q;
  bad.success_lang = bad.failure_lang;
  CHECK_THROWS_AS(check_quadruple(bad, kVocab), DomainError);
  bad = q;
  bad.rejected = q.chosen;
  CHECK_THROWS_AS(check_quadruple(bad, kVocab), DomainError);
  bad = q;
  bad.anchor.back() = tok::kThinkOpen;
  CHECK_THROWS_AS(check_quadruple(bad, kVocab), DomainError);
}

TEST_CASE("losses at the reference policy") {
  PolicyParams ref = cglab::testing::random_params(kVocab.size(), 3, 0.5);
  CaoConfig c;
  for (const auto& q : quads()) {
    CHECK(std::abs(preference_loss(ref, ref, q, 0.1).loss - std::numbers::ln2) <= 1e-12);
    CHECK(std::abs(anchor_kl(ref, ref, q.anchor).loss) <= 1e-12);
    CHECK(std::abs(cao_loss(ref, ref, q, c).loss - std::numbers::ln2) <= 1e-12);
    // The anchor gradient vanishes there, so CAO's first direction is the pure preference one.
    auto a = anchor_kl(ref, ref, q.anchor_prompt(), q.anchor_output());
    for (double x : a.grad.flat()) REQUIRE(x == 0.0);
    CHECK(cao_loss(ref, ref, q, c).grad == preference_loss(ref, ref, q, c.beta).grad);
  }
}

TEST_CASE("anchor KL is non-negative and matches a hand computation") {
  PolicyParams ref = cglab::testing::random_params(kVocab.size(), 4, 0.5);
  for (int s = 0; s < 20; ++s) {
    PolicyParams p = cglab::testing::perturbed(ref, s, 0.5);
    for (const auto& q : quads()) CHECK(anchor_kl(p, ref, q.anchor).loss >= 0.0);
  }

  // V = 2, one output position: only the bias row (index 10) is set.
  PolicyParams a(2), b(2);
  a.weights(10, 0) = 0.3;
  a.weights(10, 1) = -0.2;
  b.weights(10, 1) = 0.5;
  const double p0 = 1 / (1 + std::exp(-0.5)), p1 = 1 - p0;
  const double q0 = 1 / (1 + std::exp(0.5)), q1 = 1 - q0;
  const double expect = p0 * std::log(p0 / q0) + p1 * std::log(p1 / q1);
  CHECK(anchor_kl(a, b, TokenSeq{0}, TokenSeq{1}).loss == doctest::Approx(expect).epsilon(1e-14));
  // Two positions with the same state features except the last-token row.
  CHECK(anchor_kl(a, b, TokenSeq{0}, TokenSeq{1, 1}).loss == doctest::Approx(expect).epsilon(1e-14));
  CHECK_THROWS_AS(anchor_kl(a, b, TokenSeq{0}, TokenSeq{}), DomainError);
}

TEST_CASE("anchor split at the first THINK_OPEN") {
  PolicyParams ref = cglab::testing::random_params(kVocab.size(), 8, 0.5);
  PolicyParams p = cglab::testing::perturbed(ref, 9, 0.3);
  auto q = quads()[1];
  CHECK(anchor_kl(p, ref, q.anchor).loss == anchor_kl(p, ref, q.anchor_prompt(), q.anchor_output()).loss);
  CHECK_THROWS_AS(anchor_kl(p, ref, q.input), DomainError);
}

TEST_CASE("preference loss ignores shifts shared by policy and reference") {
  PolicyParams ref = cglab::testing::random_params(kVocab.size(), 5, 0.5);
  PolicyParams p = cglab::testing::perturbed(ref, 6, 0.3);
  const auto q = quads()[0];
  const double base = preference_loss(p, ref, q, 0.1).loss;
  // The same change to both policies moves (lp_w - ref_w) and (lp_l - ref_l) by zero.
  PolicyParams p2 = p, r2 = ref;
  for (int r = 0; r < p2.weights.rows(); r += 5)
    for (double& w : p2.weights.row(r)) w += 2.0;
  for (int r = 0; r < r2.weights.rows(); r += 5)
    for (double& w : r2.weights.row(r)) w += 2.0;
  CHECK(preference_loss(p2, r2, q, 0.1).loss == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("alignment gradients match finite differences") {
  PolicyParams ref = cglab::testing::random_params(kVocab.size(), 10, 0.4);
  PolicyParams p = cglab::testing::perturbed(ref, 11, 0.3);
  CaoConfig c;
  c.beta = 0.7;
  c.anchor_weight = 0.6;
  for (const auto& q : quads()) {
    auto pl = preference_loss(p, ref, q, c.beta);
    auto r1 = cglab::testing::finite_difference_check(
        p, pl.grad, [&](const PolicyParams& x) { return preference_loss(x, ref, q, c.beta).loss; }, 50, 1);
    CHECK(r1.worst < 1e-5);
    auto plw = preference_loss(p, ref, q, c.beta, true);
    auto r1b = cglab::testing::finite_difference_check(
        p, plw.grad, [&](const PolicyParams& x) { return preference_loss(x, ref, q, c.beta, true).loss; }, 50, 2);
    CHECK(r1b.worst < 1e-5);
    auto ak = anchor_kl(p, ref, q.anchor);
    auto r2 = cglab::testing::finite_difference_check(
        p, ak.grad, [&](const PolicyParams& x) { return anchor_kl(x, ref, q.anchor).loss; }, 50, 3);
    CHECK(r2.worst < 1e-5);
    auto cl = cao_loss(p, ref, q, c);
    auto r3 = cglab::testing::finite_difference_check(
        p, cl.grad, [&](const PolicyParams& x) { return cao_loss(x, ref, q, c).loss; }, 50, 4);
    CHECK(r3.worst < 1e-5);
  }
}

TEST_CASE("lambda = 0 reduces CAO to DPO") {
  PolicyParams ref = cglab::testing::random_params(kVocab.size(), 12, 0.4);
  PolicyParams p = cglab::testing::perturbed(ref, 13, 0.3);
  CaoConfig cao;
  cao.anchor_weight = 0.0;
  CaoConfig dpo = cao;
  dpo.algorithm = AlignAlgo::kDpo;
  for (const auto& q : quads()) {
    auto a = cao_loss(p, ref, q, cao), b = cao_loss(p, ref, q, dpo), c = preference_loss(p, ref, q, cao.beta);
    CHECK(a.loss == b.loss);
    CHECK(a.loss == c.loss);
    CHECK(a.grad == b.grad);
    CHECK(a.grad == c.grad);
  }
  auto qs = quads();
  cao.epochs = dpo.epochs = 3;
  cao.batch_size = dpo.batch_size = 3;
  auto ra = train_align(ref, qs, cao), rb = train_align(ref, qs, dpo);
  CHECK(ra.params.weights == rb.params.weights);
  REQUIRE(ra.trace.size() == 4);
  for (size_t i = 0; i < ra.trace.size(); ++i) CHECK(ra.trace[i].pref_loss == rb.trace[i].pref_loss);
}

TEST_CASE("training on quadruples") {
  PolicyParams ref = cglab::testing::random_params(kVocab.size(), 14, 0.4);
  auto qs = quads();
  CaoConfig c;
  c.epochs = 5;
  c.batch_size = 2;
  auto r = train_align(ref, qs, c);
  CHECK(std::abs(r.trace[0].pref_loss - std::numbers::ln2) <= 1e-12);
  CHECK(r.trace[0].anchor_kl == 0.0);
  CHECK(r.trace.back().pref_loss < r.trace[0].pref_loss);
  CHECK(r.trace.back().anchor_kl > 0.0);
  CHECK_THROWS_AS(train_align(ref, {}, c), ConfigError);

  c.epochs = 0;
  CHECK(train_align(ref, qs, c).params.weights == ref.weights);

  c.epochs = 2;
  c.exec = Exec::kSerial;
  auto s = train_align(ref, qs, c);
  c.exec = Exec::kParallel;
  CHECK(train_align(ref, qs, c).params.weights == s.params.weights);
}

TEST_CASE("sampled outputs are ordered and reproducible") {
  PolicyParams p = cglab::testing::random_params(kVocab.size(), 15, 0.4);
  RuleSet rules = make_rules(kVocab, 2, 1);
  auto corpus = gen_corpus(kVocab, rules, 5, 0.4, 2, {3, 5, 1});
  std::vector<int> langs{2, 0, 1};
  CaoConfig c;
  c.samples_per_prompt = 2;
  c.seed = 4;
  RewardConfig rc;
  rc.l_best = 6;
  auto a = sample_outputs(p, corpus, langs, kVocab, rc, c);
  REQUIRE(a.size() == 5u * 3u * 2u);
  for (size_t i = 1; i < a.size(); ++i)
    CHECK(std::tie(a[i - 1].sample_id, a[i - 1].language, a[i - 1].index) <
          std::tie(a[i].sample_id, a[i].language, a[i].index));
  c.exec = Exec::kSerial;
  auto b = sample_outputs(p, corpus, langs, kVocab, rc, c);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].output == b[i].output);
  CHECK(align_algo_from_string("dpo") == AlignAlgo::kDpo);
  CHECK_THROWS_AS(align_algo_from_string("ppo"), ConfigError);
}
