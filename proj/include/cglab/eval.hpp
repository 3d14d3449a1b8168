#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cglab/kernels.hpp"
#include "cglab/world.hpp"

namespace cglab {

struct ClassF1 {
  double harmful = 0.0;
  double safe = 0.0;
  double macro = 0.0;
};

// Two-class F1. A class absent from both predictions and golds scores 0.
ClassF1 class_f1(std::span<const Verdict> predictions, std::span<const Verdict> golds);
double macro_f1(std::span<const Verdict> predictions, std::span<const Verdict> golds);

struct LanguageResult {
  int language = 0;
  double macro_f1 = 0.0;
  double f1_harmful = 0.0;
  double f1_safe = 0.0;
  double invalid_rate = 0.0;
  int n = 0;
};

struct EvalReport {
  std::string stage;
  std::string checkpoint;
  std::vector<LanguageResult> languages;
  double gap = 0.0;
  // Absent when the benchmark is not parallel across languages.
  std::optional<double> consistency;

  const LanguageResult& language(int lang) const;
};

enum class DecodeMode { kGreedy, kSampled };

// Produces an output for one benchmark prompt.
using Decoder = std::function<TokenSeq(const SurfaceSample&)>;

// benchmark[k] holds the samples of one language; all lists must share
// sample_ids in the same order for consistency to be defined.
EvalReport evaluate_with(const Decoder& decode, std::span<const std::vector<SurfaceSample>> benchmark,
                         const VocabSpec& vocab, Exec exec = Exec::kParallel);

struct EvalOptions {
  DecodeMode decode = DecodeMode::kGreedy;
  int max_len = 48;
  double temperature = 1.0;
  std::uint64_t seed = 0;  // sampled decoding only
  Exec exec = Exec::kParallel;
};

EvalReport evaluate(const PolicyParams& params, std::span<const std::vector<SurfaceSample>> benchmark,
                    const VocabSpec& vocab, const EvalOptions& options = {});

// Fraction of sample ids with identical scored verdicts in every language.
// Throws ConfigError when the per-language lists are not parallel.
double cross_language_consistency(std::span<const std::vector<SurfaceSample>> benchmark,
                                  std::span<const std::vector<Verdict>> predictions);

}  // namespace cglab
