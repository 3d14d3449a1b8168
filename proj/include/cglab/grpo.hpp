#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cglab/kernels.hpp"
#include "cglab/optim.hpp"
#include "cglab/rewards.hpp"
#include "cglab/world.hpp"

namespace cglab {

struct GrpoConfig {
  int group_size = 8;
  int batch_prompts = 16;
  double learning_rate = 0.05;
  double adv_epsilon = 1e-8;
  double clip_range = 0.2;
  double kl_coef = 0.0;
  int inner_epochs = 1;
  int steps = 300;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  RewardConfig reward;
  Exec exec = Exec::kParallel;

  void validate() const;
};

struct GroupSample {
  SurfaceSample prompt;
  std::vector<Rollout> rollouts;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;
};

// A_i = (r_i - mean) / max(population std, eps)
std::vector<double> group_advantages(std::span<const double> rewards, double eps);

// Clipped surrogate plus optional KL(pi_theta || pi_ref) over the sampled
// positions, averaged over groups, rollouts and tokens. `behavior` must be
// the policy the rollouts were drawn from; `reference` is only read when
// kl_coef > 0.
LossGrad grpo_batch_loss(const PolicyParams& params, const PolicyParams& behavior,
                         const PolicyParams& reference, std::span<const GroupSample> groups,
                         const GrpoConfig& config);

LossGrad grpo_loss(const PolicyParams& params, const PolicyParams& behavior,
                   const PolicyParams& reference, const GroupSample& group, const GrpoConfig& config);

// Samples and scores one group; rollout i uses seed derive_seed(seed, {step, sample_id, language, i}).
GroupSample sample_group(const PolicyParams& behavior, const SurfaceSample& prompt, int step,
                         const GrpoConfig& config, const VocabSpec& vocab);

struct GrpoStepMetrics {
  int step = 0;
  double mean_reward = 0.0;
  double mean_len = 0.0;
  double mean_p = 0.0;
  double format_rate = 0.0;
  double accuracy_rate = 0.0;
  double mean_length_reward = 0.0;
  double mean_diversity_reward = 0.0;
  double loss = 0.0;
};

struct GrpoResult {
  PolicyParams params;
  std::vector<GrpoStepMetrics> trace;
};

GrpoResult train_grpo(PolicyParams params, std::span<const SurfaceSample> prompts, const VocabSpec& vocab,
                      const GrpoConfig& config);

}  // namespace cglab
