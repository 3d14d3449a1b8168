#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cglab/kernels.hpp"
#include "cglab/optim.hpp"
#include "cglab/rewards.hpp"
#include "cglab/world.hpp"

namespace cglab {

enum class AlignAlgo { kCao, kDpo };

AlignAlgo align_algo_from_string(std::string_view s);
std::string_view to_string(AlignAlgo a);

struct CaoConfig {
  double beta = 0.5;
  double anchor_weight = 1.0;  // lambda; the unweighted sum is lambda = 1
  int samples_per_prompt = 4;
  double temperature = 1.0;
  double learning_rate = 0.01;
  int epochs = 8;
  int batch_size = 16;
  std::uint64_t seed = 0;
  AlignAlgo algorithm = AlignAlgo::kCao;
  // Score the chosen output against its own success-language prompt instead
  // of the failure input.
  bool chosen_on_success_prompt = false;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  Exec exec = Exec::kParallel;

  void validate() const;
};

struct AlignmentQuadruple {
  std::int64_t sample_id = 0;
  int failure_lang = 0;
  int success_lang = 0;
  int failure_index = 0;
  int success_index = 0;
  Verdict gold = Verdict::kSafe;
  TokenSeq input;     // q: failure-language prompt
  TokenSeq rejected;  // p_l
  TokenSeq chosen;    // p_w
  TokenSeq anchor;    // q_a + p_w
  int anchor_prompt_len = 0;

  std::span<const Token> anchor_prompt() const { return std::span(anchor).first(anchor_prompt_len); }
  std::span<const Token> anchor_output() const { return std::span(anchor).subspan(anchor_prompt_len); }
  bool operator==(const AlignmentQuadruple&) const = default;
};

// Throws DomainError if any quadruple invariant is violated.
void check_quadruple(const AlignmentQuadruple& q, const VocabSpec& vocab);

struct ScoredOutput {
  std::int64_t sample_id = 0;
  int language = 0;
  int index = 0;
  Verdict gold = Verdict::kSafe;
  TokenSeq prompt;
  TokenSeq output;
  RewardBreakdown reward;
  bool success = false;  // format-valid and verdict correct
};

// Sampled outputs ordered by (sample_id, language, index).
std::vector<ScoredOutput> sample_outputs(const PolicyParams& params, std::span<const BaseSample> corpus,
                                         std::span<const int> languages, const VocabSpec& vocab,
                                         const RewardConfig& reward, const CaoConfig& config);

struct PairSet {
  std::vector<AlignmentQuadruple> quadruples;
  int failures = 0;
  int successes = 0;
  int skipped = 0;  // failures with no success in another language
};

// For each failure, the best same-sample success in another language by total
// reward; ties go to the lower language, then the lower sample index.
PairSet pair_outputs(std::span<const ScoredOutput> outputs, const VocabSpec& vocab);

PairSet build_pairs(const PolicyParams& params, std::span<const BaseSample> corpus,
                    std::span<const int> languages, const VocabSpec& vocab, const RewardConfig& reward,
                    const CaoConfig& config);

// -log sigmoid(beta * [(lp_w - ref_w) - (lp_l - ref_l)])
LossGrad preference_loss(const PolicyParams& params, const PolicyParams& ref, const AlignmentQuadruple& quad,
                         double beta, bool chosen_on_success_prompt = false);

// Mean over output positions of KL(pi_theta || pi_ref) along the anchor.
LossGrad anchor_kl(const PolicyParams& params, const PolicyParams& ref, std::span<const Token> anchor_prompt,
                   std::span<const Token> anchor_output);
// Splits a concatenated anchor at its first THINK_OPEN.
LossGrad anchor_kl(const PolicyParams& params, const PolicyParams& ref, std::span<const Token> anchor_tokens);

// preference_loss + lambda * anchor_kl; DPO drops the anchor term.
LossGrad cao_loss(const PolicyParams& params, const PolicyParams& ref, const AlignmentQuadruple& quad,
                  const CaoConfig& config);

struct AlignEpochMetrics {
  int epoch = 0;  // 0 is the starting point (theta = ref)
  double pref_loss = 0.0;
  double anchor_kl = 0.0;
  double pref_acc = 0.0;
};

struct AlignResult {
  PolicyParams params;
  std::vector<AlignEpochMetrics> trace;
};

AlignResult train_align(PolicyParams params, std::span<const AlignmentQuadruple> quadruples,
                        const CaoConfig& config);

}  // namespace cglab
