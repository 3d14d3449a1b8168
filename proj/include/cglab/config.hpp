#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cglab/cao.hpp"
#include "cglab/eval.hpp"
#include "cglab/grpo.hpp"
#include "cglab/io.hpp"
#include "cglab/sft.hpp"

namespace cglab {

struct WorldConfig {
  VocabSpec vocab;
  int concepts_per_rule = 3;
  CorpusShape shape;
  int train_size = 200;
  double harmful_fraction = 0.5;
  // Languages the stage-1/2 training prompts are rendered in.
  std::vector<int> train_languages = {0};
  int mainstream_language = 0;
};

struct EvalConfig {
  int size = 200;
  DecodeMode decode = DecodeMode::kGreedy;
  std::vector<int> languages;  // empty: every language
};

struct RunConfig {
  std::string run_id = "desk";
  std::uint64_t seed = 42;
  std::string output_dir = "runs";
  bool parallel = true;
  WorldConfig world;
  RewardConfig reward;
  SftConfig sft;
  GrpoConfig grpo;
  CaoConfig cao;  // cao.languages lives in pair_languages
  std::vector<int> pair_languages;  // empty: every language
  EvalConfig eval;

  // Fills stage seeds from the master seed and propagates shared settings.
  void finalize();
  void validate() const;

  std::vector<int> all_languages() const;
  std::vector<int> eval_languages() const;
  std::vector<int> alignment_languages() const;
  std::filesystem::path run_dir() const;
};

// Serialized form, including every default.
json to_json(const RunConfig& c);

// defaults <- document; an unknown key anywhere is a ConfigError.
RunConfig config_from_json(const json& document);
RunConfig load_config(const std::filesystem::path& path);

// Applies "a.b.c=value" (value parsed as JSON, falling back to a string).
void apply_override(json& document, const std::string& assignment);

// Environment variable that overrides RunConfig::output_dir.
inline constexpr const char* kOutputRootEnv = "CGLAB_OUTPUT_ROOT";

}  // namespace cglab
