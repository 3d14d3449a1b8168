#include "cglab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cglab {

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("grpo.group_size must be at least 2");
  if (batch_prompts < 1) throw ConfigError("grpo.batch_prompts must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("grpo.learning_rate must be positive");
  if (!(adv_epsilon > 0.0)) throw ConfigError("grpo.adv_epsilon must be positive");
  if (!(clip_range > 0.0 && clip_range < 1.0)) throw ConfigError("grpo.clip_range must lie in (0, 1)");
  if (!(kl_coef >= 0.0)) throw ConfigError("grpo.kl_coef must be non-negative");
  if (inner_epochs < 1) throw ConfigError("grpo.inner_epochs must be positive");
  if (steps < 0) throw ConfigError("grpo.steps must be non-negative");
  reward.validate();
}

std::vector<double> group_advantages(std::span<const double> rewards, double eps) {
  if (rewards.size() < 2) throw DomainError("group_advantages needs at least two rewards");
  const double n = static_cast<double>(rewards.size());
  // Offsets from the first reward cancel any common shift before rounding.
  std::vector<double> d;
  d.reserve(rewards.size());
  for (double r : rewards) d.push_back(r - rewards.front());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  // eps only guards the all-equal group, so a nonzero std is used as is
  const double denom = std::max(std::sqrt(var / n), eps);
  for (double& x : d) x = (x - mean) / denom;
  return d;
}

namespace {

// Loss and gradient of one rollout, already scaled by `weight`.
double rollout_term(const PolicyParams& params, const PolicyParams& behavior, const PolicyParams& reference,
                    const Rollout& r, double advantage, double weight, const GrpoConfig& config,
                    SparseGrad& grad) {
  const auto& out = r.output_tokens;
  const auto bag = params.features.prompt_bag(r.prompt_tokens);
  const int v = params.vocab_size();
  const double scale = weight / static_cast<double>(out.size());
  const bool with_kl = config.kl_coef > 0.0;
  std::vector<int> active;
  std::vector<double> p(v), pb(v), lpv(v), lr(v), dz(v);
  double loss = 0.0;
  for (size_t t = 0; t < out.size(); ++t) {
    params.features.active(bag, std::span(out).first(t), active);
    const Token y = out[t];
    state_logits(params, active, lpv);
    state_logits(behavior, active, pb);
    log_softmax_inplace(lpv);
    for (int j = 0; j < v; ++j) p[j] = std::exp(lpv[j]);
    const double lp = lpv[y];
    const double lb = pb[y] - softmax_inplace(pb);
    const double ratio = std::exp(lp - lb);
    if (!std::isfinite(ratio)) throw NumericError("non-finite importance ratio");
    const double clipped = std::clamp(ratio, 1.0 - config.clip_range, 1.0 + config.clip_range);
    const double unclipped_obj = ratio * advantage;
    const double clipped_obj = clipped * advantage;
    std::fill(dz.begin(), dz.end(), 0.0);
    if (unclipped_obj <= clipped_obj) {
      loss -= scale * unclipped_obj;
      // d(-ratio*A)/dz = -A * ratio * (e_y - p)
      const double c = -scale * advantage * ratio;
      for (int j = 0; j < v; ++j) dz[j] = -c * p[j];
      dz[y] += c;
    } else {
      loss -= scale * clipped_obj;
    }
    if (with_kl) {
      state_logits(reference, active, lr);
      log_softmax_inplace(lr);
      double kl = 0.0;
      for (int j = 0; j < v; ++j) kl += p[j] * (lpv[j] - lr[j]);
      loss += scale * config.kl_coef * kl;
      const double c = scale * config.kl_coef;
      for (int j = 0; j < v; ++j) dz[j] += c * p[j] * (lpv[j] - lr[j] - kl);
    }
    for (int f : active) {
      auto g = grad.row(f);
      for (int j = 0; j < v; ++j) g[j] += dz[j];
    }
  }
  return loss;
}

}  // namespace

LossGrad grpo_batch_loss(const PolicyParams& params, const PolicyParams& behavior,
                         const PolicyParams& reference, std::span<const GroupSample> groups,
                         const GrpoConfig& config) {
  if (groups.empty()) throw DomainError("grpo loss needs at least one group");
  struct Item {
    const Rollout* rollout;
    double advantage;
    double weight;
  };
  std::vector<Item> items;
  for (const auto& g : groups) {
    if (g.rollouts.size() != g.advantages.size() || g.rollouts.empty())
      throw DomainError("group rollouts and advantages disagree");
    const double w = 1.0 / (static_cast<double>(groups.size()) * static_cast<double>(g.rollouts.size()));
    for (size_t i = 0; i < g.rollouts.size(); ++i) items.push_back({&g.rollouts[i], g.advantages[i], w});
  }
  return reduce_items(items.size(), params.weights.rows(), params.weights.cols(), config.exec,
                      [&](size_t i, SparseGrad& g) {
                        const Item& it = items[i];
                        return rollout_term(params, behavior, reference, *it.rollout, it.advantage,
                                            it.weight, config, g);
                      });
}

LossGrad grpo_loss(const PolicyParams& params, const PolicyParams& behavior,
                   const PolicyParams& reference, const GroupSample& group, const GrpoConfig& config) {
  return grpo_batch_loss(params, behavior, reference, std::span(&group, 1), config);
}

namespace {

std::uint64_t rollout_seed(std::uint64_t seed, int step, const SurfaceSample& s, int i) {
  return derive_seed(seed, {static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(s.sample_id),
                            static_cast<std::uint64_t>(s.language), static_cast<std::uint64_t>(i)});
}

void score_group(GroupSample& g, const GrpoConfig& config, const VocabSpec& vocab) {
  std::vector<double> totals;
  for (auto& r : g.rollouts) {
    r.reward = score_rollout(r, g.prompt.gold_verdict, config.reward, vocab);
    g.rewards.push_back(r.reward);
    totals.push_back(r.reward.total);
  }
  g.advantages = group_advantages(totals, config.adv_epsilon);
}

}  // namespace

GroupSample sample_group(const PolicyParams& behavior, const SurfaceSample& prompt, int step,
                         const GrpoConfig& config, const VocabSpec& vocab) {
  std::vector<SampleRequest> req;
  for (int i = 0; i < config.group_size; ++i)
    req.push_back({prompt.prompt_tokens, rollout_seed(config.seed, step, prompt, i)});
  GroupSample g{prompt, {}, {}, {}};
  g.rollouts = sample_batch(behavior, req, config.reward.max_generation_length(), 1.0, config.exec);
  score_group(g, config, vocab);
  return g;
}

GrpoResult train_grpo(PolicyParams params, std::span<const SurfaceSample> prompts, const VocabSpec& vocab,
                      const GrpoConfig& config) {
  config.validate();
  if (prompts.empty()) throw DomainError("train_grpo needs prompts");
  GrpoResult result{std::move(params), {}};
  PolicyParams& p = result.params;
  const PolicyParams reference = p;
  Optimizer opt(config.optimizer, config.learning_rate, p.weights.rows(), p.weights.cols());

  std::vector<size_t> order(prompts.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream order_rng(derive_seed(config.seed, {tag("prompt-order")}));
  std::shuffle(order.begin(), order.end(), order_rng.engine());
  size_t cursor = 0;

  const int max_len = config.reward.max_generation_length();
  for (int step = 0; step < config.steps; ++step) {
    std::vector<GroupSample> groups;
    std::vector<SampleRequest> req;
    for (int b = 0; b < config.batch_prompts; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng.engine());
        cursor = 0;
      }
      const SurfaceSample& s = prompts[order[cursor++]];
      groups.push_back({s, {}, {}, {}});
      for (int i = 0; i < config.group_size; ++i) req.push_back({s.prompt_tokens, rollout_seed(config.seed, step, s, i)});
    }
    std::vector<Rollout> rollouts = sample_batch(p, req, max_len, 1.0, config.exec);
    GrpoStepMetrics m;
    m.step = step;
    size_t k = 0;
    for (auto& g : groups) {
      for (int i = 0; i < config.group_size; ++i) g.rollouts.push_back(std::move(rollouts[k++]));
      score_group(g, config, vocab);
      for (const auto& r : g.rewards) {
        m.mean_reward += r.total;
        m.mean_len += r.reasoning_length;
        m.mean_p += r.repetition_p;
        m.format_rate += r.format;
        m.accuracy_rate += r.accuracy;
        m.mean_length_reward += r.length_reward;
        m.mean_diversity_reward += r.diversity_reward;
      }
    }
    const double n = static_cast<double>(k);
    for (double* x : {&m.mean_reward, &m.mean_len, &m.mean_p, &m.format_rate, &m.accuracy_rate,
                      &m.mean_length_reward, &m.mean_diversity_reward})
      *x /= n;

    const PolicyParams behavior = p;
    for (int e = 0; e < config.inner_epochs; ++e) {
      LossGrad lg = grpo_batch_loss(p, behavior, reference, groups, config);
      check_finite_loss(lg.loss, p, "grpo");
      if (e == 0) m.loss = lg.loss;
      opt.step(p, lg.grad);
    }
    result.trace.push_back(m);
  }
  return result;
}

}  // namespace cglab
