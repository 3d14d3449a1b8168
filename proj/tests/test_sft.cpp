#include <doctest.h>

#include <cmath>
#include <limits>

#include "cglab/sft.hpp"
#include "support.hpp"

using namespace cglab;

namespace {

std::vector<TeacherDemo> demos(const VocabSpec& v, int n, std::uint64_t seed, CorpusShape shape = {}) {
  RuleSet rules = make_rules(v, 3, seed);
  auto corpus = gen_corpus(v, rules, n, 0.5, seed + 1, shape);
  std::vector<TeacherDemo> out;
  for (auto& s : translate_all(corpus, 0, v)) out.push_back(make_teacher_demo(s, rules, v));
  return out;
}

}  // namespace

TEST_CASE("uniform policy has loss log V") {
  VocabSpec v{};
  auto d = demos(v, 10, 1);
  PolicyParams p(v.size());
  CHECK(sft_loss(p, d).loss == doctest::Approx(std::log(v.size())).epsilon(1e-14));
  CHECK_THROWS_AS(sft_loss(p, {}), DomainError);
}

TEST_CASE("sft gradient matches finite differences") {
  VocabSpec v = cglab::testing::small_vocab();
  auto d = demos(v, 4, 2, {4, 6, 2});
  PolicyParams p = cglab::testing::random_params(v.size(), 9, 0.4);
  LossGrad lg = sft_loss(p, d);
  auto r = cglab::testing::finite_difference_check(
      p, lg.grad, [&](const PolicyParams& q) { return sft_loss(q, d).loss; }, 60, 3);
  CHECK(r.worst < 1e-6);
}

TEST_CASE("zero epochs return the input parameters") {
  VocabSpec v = cglab::testing::small_vocab();
  auto d = demos(v, 8, 3, {4, 6, 2});
  PolicyParams p = cglab::testing::random_params(v.size(), 1);
  SftConfig c;
  c.epochs = 0;
  auto r = train_sft(p, d, c);
  CHECK(r.params.weights == p.weights);
  REQUIRE(r.trace.size() == 1);
  CHECK(r.trace[0].epoch == 0);
}

TEST_CASE("same seed gives identical weights") {
  VocabSpec v = cglab::testing::small_vocab();
  auto d = demos(v, 30, 4, {4, 6, 2});
  SftConfig c;
  c.epochs = 3;
  c.seed = 77;
  auto a = train_sft(PolicyParams(v.size()), d, c);
  auto b = train_sft(PolicyParams(v.size()), d, c);
  CHECK(a.params.weights == b.params.weights);
  c.seed = 78;
  CHECK_FALSE(train_sft(PolicyParams(v.size()), d, c).params.weights == a.params.weights);
}

TEST_CASE("full-batch gradient descent with a small step never raises the loss") {
  // Step 0.05 is well below 2 / (curvature bound) for this feature scale.
  VocabSpec v{};
  auto d = demos(v, 60, 5);
  SftConfig c;
  c.epochs = 25;
  c.batch_size = static_cast<int>(d.size());
  c.optimizer = OptimizerKind::kGradientDescent;
  c.learning_rate = 0.05;
  auto r = train_sft(PolicyParams(v.size()), d, c);
  for (size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].loss <= r.trace[i - 1].loss);
  CHECK(r.trace.back().loss < r.trace.front().loss);
}

TEST_CASE("desk corpus: default training more than halves the loss") {
  VocabSpec v{};
  auto d = demos(v, 200, 42);
  SftConfig c;
  auto r = train_sft(PolicyParams(v.size()), d, c);
  MESSAGE("initial NLL " << r.trace.front().loss << ", final NLL " << r.trace.back().loss);
  CHECK(r.trace.back().loss < 0.5 * r.trace.front().loss);
}

TEST_CASE("optimizer rejects non-finite gradients and keeps the last finite params") {
  PolicyParams p = cglab::testing::random_params(cglab::testing::small_vocab().size(), 2);
  const Matrix before = p.weights;
  Matrix g(p.weights.rows(), p.weights.cols());
  g(3, 4) = std::numeric_limits<double>::quiet_NaN();
  for (auto kind : {OptimizerKind::kAdam, OptimizerKind::kGradientDescent}) {
    Optimizer opt(kind, 0.1, p.weights.rows(), p.weights.cols());
    try {
      opt.step(p, g);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      REQUIRE(e.last_finite);
      CHECK(e.last_finite->weights == before);
    }
    CHECK(p.weights == before);
  }
  CHECK_THROWS_AS(check_finite_loss(std::numeric_limits<double>::infinity(), p, "sft"), TrainingError);
  CHECK_NOTHROW(check_finite_loss(1.0, p, "sft"));
}

TEST_CASE("gradient descent step and Adam zero-skip") {
  PolicyParams p(cglab::testing::small_vocab().size());
  Matrix g(p.weights.rows(), p.weights.cols());
  g(1, 2) = 2.0;
  Optimizer gd(OptimizerKind::kGradientDescent, 0.5, p.weights.rows(), p.weights.cols());
  gd.step(p, g);
  CHECK(p.weights(1, 2) == -1.0);
  CHECK(p.version == 1);

  PolicyParams q(cglab::testing::small_vocab().size());
  Optimizer adam(OptimizerKind::kAdam, 0.1, q.weights.rows(), q.weights.cols());
  adam.step(q, g);
  CHECK(q.weights(1, 2) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(q.weights(1, 3) == 0.0);
  CHECK(optimizer_from_string("sgd") == OptimizerKind::kGradientDescent);
  CHECK_THROWS_AS(optimizer_from_string("rmsprop"), ConfigError);
}

TEST_CASE("sft config validation") {
  SftConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
