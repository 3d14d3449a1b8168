#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cglab/kernels.hpp"
#include "cglab/optim.hpp"
#include "cglab/world.hpp"

namespace cglab {

struct SftConfig {
  int epochs = 60;
  int batch_size = 16;
  double learning_rate = 0.1;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 0;
  Exec exec = Exec::kParallel;

  void validate() const;
};

struct SftEpochMetrics {
  int epoch = 0;  // 0 is the untrained starting point
  double loss = 0.0;
};

// Mean per-token negative log-likelihood of the demos and its exact gradient.
LossGrad sft_loss(const PolicyParams& params, std::span<const TeacherDemo> batch,
                  Exec exec = Exec::kParallel);

struct SftResult {
  PolicyParams params;
  std::vector<SftEpochMetrics> trace;
};

// The trace holds the full-corpus loss before training and after every epoch.
SftResult train_sft(PolicyParams params, std::span<const TeacherDemo> demos, const SftConfig& config);

}  // namespace cglab
