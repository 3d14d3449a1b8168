#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cglab/config.hpp"
#include "cglab/report.hpp"

namespace cglab {

enum class Stage { kGenData, kSft, kGrpo, kBuildPairs, kAlign, kEval, kReport };

Stage stage_from_string(std::string_view s);
std::string_view to_string(Stage s);

struct World {
  VocabSpec vocab;
  RuleSet rules;
  std::vector<BaseSample> train;
  std::vector<BaseSample> eval;
};

// Stage runner over one run directory. Each stage reads its prerequisites
// from disk and writes its own artifacts; nothing is overwritten.
//
// Layout: config.json world.json corpus_train.jsonl corpus_eval.jsonl
//         sft.ckpt grpo.ckpt pairs.jsonl align_<algo>.ckpt
//         reports/<checkpoint>.json metrics.jsonl summary.json summary.csv
class Pipeline {
 public:
  explicit Pipeline(RunConfig config, std::filesystem::path run_dir = {});

  const RunConfig& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return dir_; }
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  void gen_data();
  void sft();
  void grpo();
  void build_pairs();
  void align(AlignAlgo algo);
  EvalReport eval(const std::string& checkpoint);
  Summary report(std::ostream* out);

  // gen-data, sft, grpo, build-pairs, align (dpo, cao), eval of every
  // checkpoint, report.
  Summary run_all(std::ostream* progress);

  World load_world() const;
  std::vector<TeacherDemo> train_demos(const World& w) const;
  std::vector<SurfaceSample> train_prompts(const World& w) const;
  std::vector<std::vector<SurfaceSample>> benchmark(const World& w) const;

 private:
  void require(const std::string& artifact, std::string_view producer) const;
  void save_ckpt(const std::string& name, const PolicyParams& params) const;
  PolicyParams load_ckpt(const std::string& name) const;
  template <class Fn>
  auto guarded(const std::string& stage, Fn&& fn);

  RunConfig config_;
  std::filesystem::path dir_;
  MetricsLog metrics_;
};

}  // namespace cglab
