#include "cglab/pipeline.hpp"

#include <algorithm>
#include <ostream>

namespace cglab {

Stage stage_from_string(std::string_view s) {
  if (s == "gen-data") return Stage::kGenData;
  if (s == "sft") return Stage::kSft;
  if (s == "grpo") return Stage::kGrpo;
  if (s == "build-pairs") return Stage::kBuildPairs;
  if (s == "align") return Stage::kAlign;
  if (s == "eval") return Stage::kEval;
  if (s == "report") return Stage::kReport;
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kGenData: return "gen-data";
    case Stage::kSft: return "sft";
    case Stage::kGrpo: return "grpo";
    case Stage::kBuildPairs: return "build-pairs";
    case Stage::kAlign: return "align";
    case Stage::kEval: return "eval";
    case Stage::kReport: return "report";
  }
  return "?";
}

Pipeline::Pipeline(RunConfig config, std::filesystem::path run_dir)
    : config_(std::move(config)),
      dir_(run_dir.empty() ? config_.run_dir() : std::move(run_dir)),
      metrics_(dir_ / "metrics.jsonl") {
  config_.finalize();
  config_.validate();
}

void Pipeline::require(const std::string& artifact, std::string_view producer) const {
  if (!std::filesystem::exists(path(artifact)))
    throw ArtifactError("missing " + path(artifact).string() + "; run the '" + std::string(producer) +
                        "' stage first");
}

void Pipeline::save_ckpt(const std::string& name, const PolicyParams& params) const {
  write_artifact(path(name + ".ckpt"), checkpoint_text(params));
}

PolicyParams Pipeline::load_ckpt(const std::string& name) const { return load_checkpoint(path(name + ".ckpt")); }

template <class Fn>
auto Pipeline::guarded(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const TrainingError& e) {
    if (e.last_finite) save_checkpoint(*e.last_finite, path(stage + ".diverged.ckpt"));
    throw;
  }
}

void Pipeline::gen_data() {
  const auto& w = config_.world;
  const RuleSet rules = make_rules(w.vocab, w.concepts_per_rule, derive_seed(config_.seed, {tag("rules")}));
  const auto train = gen_corpus(w.vocab, rules, w.train_size, w.harmful_fraction,
                                derive_seed(config_.seed, {tag("train-corpus")}), w.shape);
  const auto eval = gen_corpus(w.vocab, rules, config_.eval.size, w.harmful_fraction,
                               derive_seed(config_.seed, {tag("eval-corpus")}), w.shape);
  std::filesystem::create_directories(dir_);
  write_artifact(path("config.json"), to_json(config_).dump(2) + "\n");
  json world = {{"vocab", to_json(w.vocab)},
                {"rules", to_json(rules)},
                {"shape",
                 {{"min_concepts", w.shape.min_concepts},
                  {"max_concepts", w.shape.max_concepts},
                  {"max_rules_per_sample", w.shape.max_rules_per_sample}}}};
  write_artifact(path("world.json"), world.dump(2) + "\n");
  auto dump = [](const std::vector<BaseSample>& corpus) {
    std::vector<json> recs;
    for (const auto& s : corpus) recs.push_back(to_json(s));
    return to_jsonl(recs);
  };
  write_artifact(path("corpus_train.jsonl"), dump(train));
  write_artifact(path("corpus_eval.jsonl"), dump(eval));
  metrics_.append({{"stage", "gen-data"}, {"train_size", train.size()}, {"eval_size", eval.size()}});
}

World Pipeline::load_world() const {
  require("world.json", "gen-data");
  require("corpus_train.jsonl", "gen-data");
  require("corpus_eval.jsonl", "gen-data");
  World w;
  const json world = json::parse(read_file(path("world.json")));
  w.vocab = vocab_from_json(world.at("vocab"));
  w.rules = rules_from_json(world.at("rules"));
  w.rules.validate(w.vocab);
  for (const auto& j : parse_jsonl(read_file(path("corpus_train.jsonl")))) w.train.push_back(base_sample_from_json(j));
  for (const auto& j : parse_jsonl(read_file(path("corpus_eval.jsonl")))) w.eval.push_back(base_sample_from_json(j));
  return w;
}

std::vector<TeacherDemo> Pipeline::train_demos(const World& w) const {
  std::vector<TeacherDemo> demos;
  for (int lang : config_.world.train_languages)
    for (const auto& s : w.train) demos.push_back(make_teacher_demo(translate(s, lang, w.vocab), w.rules, w.vocab));
  return demos;
}

std::vector<SurfaceSample> Pipeline::train_prompts(const World& w) const {
  std::vector<SurfaceSample> out;
  for (int lang : config_.world.train_languages)
    for (const auto& s : w.train) out.push_back(translate(s, lang, w.vocab));
  return out;
}

std::vector<std::vector<SurfaceSample>> Pipeline::benchmark(const World& w) const {
  std::vector<std::vector<SurfaceSample>> out;
  for (int lang : config_.eval_languages()) out.push_back(translate_all(w.eval, lang, w.vocab));
  return out;
}

void Pipeline::sft() {
  const World w = load_world();
  const auto demos = train_demos(w);
  SftResult res = guarded("sft", [&] { return train_sft(PolicyParams(w.vocab.size()), demos, config_.sft); });
  for (const auto& m : res.trace) metrics_.append({{"stage", "sft"}, {"epoch", m.epoch}, {"loss", m.loss}});
  save_ckpt("sft", res.params);
}

void Pipeline::grpo() {
  require("sft.ckpt", "sft");
  const World w = load_world();
  const auto prompts = train_prompts(w);
  GrpoResult res = guarded("grpo", [&] { return train_grpo(load_ckpt("sft"), prompts, w.vocab, config_.grpo); });
  for (const auto& m : res.trace)
    metrics_.append({{"stage", "grpo"},
                     {"step", m.step},
                     {"mean_reward", m.mean_reward},
                     {"mean_len", m.mean_len},
                     {"mean_p", m.mean_p},
                     {"format_rate", m.format_rate},
                     {"accuracy_rate", m.accuracy_rate},
                     {"mean_length_reward", m.mean_length_reward},
                     {"mean_diversity_reward", m.mean_diversity_reward},
                     {"loss", m.loss}});
  save_ckpt("grpo", res.params);
}

void Pipeline::build_pairs() {
  require("grpo.ckpt", "grpo");
  const World w = load_world();
  const auto langs = config_.alignment_languages();
  const PairSet pairs =
      cglab::build_pairs(load_ckpt("grpo"), w.train, langs, w.vocab, config_.reward, config_.cao);
  std::vector<json> recs;
  for (const auto& q : pairs.quadruples) recs.push_back(to_json(q));
  write_artifact(path("pairs.jsonl"), to_jsonl(recs));
  metrics_.append({{"stage", "build-pairs"},
                   {"quadruples", pairs.quadruples.size()},
                   {"failures", pairs.failures},
                   {"successes", pairs.successes},
                   {"skipped", pairs.skipped}});
}

void Pipeline::align(AlignAlgo algo) {
  require("pairs.jsonl", "build-pairs");
  require("grpo.ckpt", "grpo");
  const World w = load_world();
  std::vector<AlignmentQuadruple> quads;
  for (const auto& j : parse_jsonl(read_file(path("pairs.jsonl")))) {
    quads.push_back(quadruple_from_json(j));
    check_quadruple(quads.back(), w.vocab);
  }
  CaoConfig cfg = config_.cao;
  cfg.algorithm = algo;
  const std::string name = "align_" + std::string(to_string(algo));
  AlignResult res = guarded(name, [&] { return train_align(load_ckpt("grpo"), quads, cfg); });
  for (const auto& m : res.trace)
    metrics_.append({{"stage", "align"},
                     {"algo", std::string(to_string(algo))},
                     {"epoch", m.epoch},
                     {"pref_loss", m.pref_loss},
                     {"anchor_kl", m.anchor_kl},
                     {"pref_acc", m.pref_acc}});
  save_ckpt(name, res.params);
}

EvalReport Pipeline::eval(const std::string& checkpoint) {
  require(checkpoint + ".ckpt", checkpoint.rfind("align", 0) == 0 ? "align" : checkpoint);
  const World w = load_world();
  const auto bench = benchmark(w);
  EvalOptions opts;
  opts.decode = config_.eval.decode;
  opts.max_len = config_.reward.max_generation_length();
  opts.seed = derive_seed(config_.seed, {tag("eval"), tag(checkpoint)});
  opts.exec = config_.parallel ? Exec::kParallel : Exec::kSerial;
  EvalReport report = evaluate(load_ckpt(checkpoint), bench, w.vocab, opts);
  report.checkpoint = checkpoint;
  report.stage = checkpoint.rfind("align", 0) == 0 ? "align" : checkpoint;
  const json j = to_json(report);
  write_artifact(path("reports/" + checkpoint + ".json"), j.dump(2) + "\n");
  json rec = j;
  rec["stage"] = "eval";
  rec["evaluated_stage"] = report.stage;
  metrics_.append(rec);
  return report;
}

Summary Pipeline::report(std::ostream* out) {
  std::vector<EvalReport> reports;
  const auto dir = path("reports");
  if (std::filesystem::exists(dir)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) reports.push_back(eval_report_from_json(json::parse(read_file(f))));
  }
  if (reports.empty()) throw ArtifactError("no eval reports under " + dir.string() + "; run the 'eval' stage first");
  const Summary s = build_summary(config_.run_id, reports, config_.world.mainstream_language);
  // The summary is derived data and is refreshed as more reports arrive.
  const std::string sj = to_json(s).dump(2) + "\n";
  std::filesystem::remove(path("summary.json"));
  std::filesystem::remove(path("summary.csv"));
  write_artifact(path("summary.json"), sj);
  write_artifact(path("summary.csv"), render_csv(s));
  if (out) *out << render_table(s);
  return s;
}

Summary Pipeline::run_all(std::ostream* progress) {
  auto note = [&](const char* what) {
    if (progress) *progress << "[" << config_.run_id << "] " << what << std::endl;
  };
  note("gen-data");
  gen_data();
  note("sft");
  sft();
  note("eval sft");
  eval("sft");
  note("grpo");
  grpo();
  note("eval grpo");
  eval("grpo");
  note("build-pairs");
  build_pairs();
  note("align dpo");
  align(AlignAlgo::kDpo);
  note("align cao");
  align(AlignAlgo::kCao);
  note("eval align_dpo");
  eval("align_dpo");
  note("eval align_cao");
  eval("align_cao");
  note("report");
  return report(progress);
}

}  // namespace cglab
