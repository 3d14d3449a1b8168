#include "cglab/sft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cglab {

void SftConfig::validate() const {
  if (epochs < 0) throw ConfigError("sft.epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("sft.batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("sft.learning_rate must be positive");
}

LossGrad sft_loss(const PolicyParams& params, std::span<const TeacherDemo> batch, Exec exec) {
  if (batch.empty()) throw DomainError("sft_loss needs a non-empty batch");
  double tokens = 0.0;
  for (const auto& d : batch) tokens += static_cast<double>(d.demo_tokens.size());
  const double scale = -1.0 / tokens;
  LossGrad out = reduce_items(batch.size(), params.weights.rows(), params.weights.cols(), exec,
                              [&](size_t i, SparseGrad& g) {
                                const auto& d = batch[i];
                                return scale * accumulate_log_prob_grad(params, d.surface.prompt_tokens,
                                                                        d.demo_tokens, scale, g);
                              });
  return out;
}

SftResult train_sft(PolicyParams params, std::span<const TeacherDemo> demos, const SftConfig& config) {
  config.validate();
  if (demos.empty()) throw DomainError("train_sft needs a non-empty corpus");
  SftResult result{std::move(params), {}};
  PolicyParams& p = result.params;

  auto full_loss = [&] { return sft_loss(p, demos, config.exec).loss; };
  result.trace.push_back({0, full_loss()});

  Optimizer opt(config.optimizer, config.learning_rate, p.weights.rows(), p.weights.cols());
  std::vector<size_t> order(demos.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(config.seed);
  std::vector<TeacherDemo> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        batch.push_back(demos[order[i]]);
      LossGrad lg = sft_loss(p, batch, config.exec);
      check_finite_loss(lg.loss, p, "sft");
      opt.step(p, lg.grad);
    }
    const double loss = full_loss();
    check_finite_loss(loss, p, "sft");
    result.trace.push_back({epoch, loss});
  }
  return result;
}

}  // namespace cglab
