#include "cglab/config.hpp"

#include <cstdlib>
#include <numeric>

namespace cglab {

namespace {

std::string_view decode_name(DecodeMode m) { return m == DecodeMode::kGreedy ? "greedy" : "sampled"; }

DecodeMode decode_from_string(const std::string& s) {
  if (s == "greedy") return DecodeMode::kGreedy;
  if (s == "sampled") return DecodeMode::kSampled;
  throw ConfigError("unknown decode mode '" + s + "'");
}

// Copies `src` into `dst`, rejecting keys `dst` does not already have.
void overlay(json& dst, const json& src, const std::string& path) {
  if (!src.is_object()) throw ConfigError("config block '" + path + "' must be an object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!dst.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = dst[it.key()];
    if (slot.is_object())
      overlay(slot, it.value(), key);
    else
      slot = it.value();
  }
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

void RunConfig::finalize() {
  sft.seed = derive_seed(seed, {tag("sft")});
  grpo.seed = derive_seed(seed, {tag("grpo")});
  cao.seed = derive_seed(seed, {tag("cao")});
  grpo.reward = reward;
  const Exec exec = parallel ? Exec::kParallel : Exec::kSerial;
  sft.exec = grpo.exec = cao.exec = exec;
}

void RunConfig::validate() const {
  if (run_id.empty()) throw ConfigError("run_id must be non-empty");
  world.vocab.validate();
  if (world.train_size < 1) throw ConfigError("world.train_size must be positive");
  if (eval.size < 1) throw ConfigError("eval.size must be positive");
  auto check_langs = [&](const std::vector<int>& langs, const char* what) {
    for (int l : langs)
      if (l < 0 || l >= world.vocab.num_languages)
        throw ConfigError(std::string(what) + " names language " + std::to_string(l) + " out of range");
  };
  if (world.train_languages.empty()) throw ConfigError("world.train_languages must be non-empty");
  check_langs(world.train_languages, "world.train_languages");
  check_langs(eval.languages, "eval.languages");
  check_langs(pair_languages, "cao.languages");
  check_langs({world.mainstream_language}, "world.mainstream_language");
  reward.validate();
  sft.validate();
  grpo.validate();
  cao.validate();
}

std::vector<int> RunConfig::all_languages() const {
  std::vector<int> out(world.vocab.num_languages);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

std::vector<int> RunConfig::eval_languages() const {
  return eval.languages.empty() ? all_languages() : eval.languages;
}

std::vector<int> RunConfig::alignment_languages() const {
  return pair_languages.empty() ? all_languages() : pair_languages;
}

std::filesystem::path RunConfig::run_dir() const {
  std::filesystem::path root = output_dir;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) root = env;
  return root / run_id;
}

json to_json(const RunConfig& c) {
  json j;
  j["run_id"] = c.run_id;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["parallel"] = c.parallel;
  j["world"] = {{"num_languages", c.world.vocab.num_languages},
                {"concepts_per_language", c.world.vocab.concepts_per_language},
                {"num_rules", c.world.vocab.num_rules},
                {"concepts_per_rule", c.world.concepts_per_rule},
                {"min_concepts", c.world.shape.min_concepts},
                {"max_concepts", c.world.shape.max_concepts},
                {"max_rules_per_sample", c.world.shape.max_rules_per_sample},
                {"train_size", c.world.train_size},
                {"harmful_fraction", c.world.harmful_fraction},
                {"train_languages", c.world.train_languages},
                {"mainstream_language", c.world.mainstream_language}};
  j["reward"] = {{"l_best", c.reward.l_best},
                 {"w_format", c.reward.w_format},
                 {"w_accuracy", c.reward.w_accuracy},
                 {"w_length", c.reward.w_length},
                 {"w_diversity", c.reward.w_diversity},
                 {"gate_on_format", c.reward.gate_on_format},
                 {"ngram_order", c.reward.ngram_order}};
  j["sft"] = {{"epochs", c.sft.epochs},
              {"batch_size", c.sft.batch_size},
              {"learning_rate", c.sft.learning_rate},
              {"optimizer", std::string(to_string(c.sft.optimizer))}};
  j["grpo"] = {{"group_size", c.grpo.group_size},
               {"batch_prompts", c.grpo.batch_prompts},
               {"learning_rate", c.grpo.learning_rate},
               {"adv_epsilon", c.grpo.adv_epsilon},
               {"clip_range", c.grpo.clip_range},
               {"kl_coef", c.grpo.kl_coef},
               {"inner_epochs", c.grpo.inner_epochs},
               {"steps", c.grpo.steps},
               {"optimizer", std::string(to_string(c.grpo.optimizer))}};
  j["cao"] = {{"beta", c.cao.beta},
              {"anchor_weight", c.cao.anchor_weight},
              {"samples_per_prompt", c.cao.samples_per_prompt},
              {"temperature", c.cao.temperature},
              {"learning_rate", c.cao.learning_rate},
              {"epochs", c.cao.epochs},
              {"batch_size", c.cao.batch_size},
              {"algorithm", std::string(to_string(c.cao.algorithm))},
              {"chosen_on_success_prompt", c.cao.chosen_on_success_prompt},
              {"optimizer", std::string(to_string(c.cao.optimizer))},
              {"languages", c.pair_languages}};
  j["eval"] = {{"size", c.eval.size},
               {"decode", std::string(decode_name(c.eval.decode))},
               {"languages", c.eval.languages}};
  return j;
}

RunConfig config_from_json(const json& document) {
  json merged = to_json(RunConfig{});
  overlay(merged, document, "");
  RunConfig c;
  c.run_id = get<std::string>(merged, "run_id");
  c.seed = get<std::uint64_t>(merged, "seed");
  c.output_dir = get<std::string>(merged, "output_dir");
  c.parallel = get<bool>(merged, "parallel");
  const json& w = merged["world"];
  c.world.vocab.num_languages = get<int>(w, "num_languages");
  c.world.vocab.concepts_per_language = get<int>(w, "concepts_per_language");
  c.world.vocab.num_rules = get<int>(w, "num_rules");
  c.world.concepts_per_rule = get<int>(w, "concepts_per_rule");
  c.world.shape.min_concepts = get<int>(w, "min_concepts");
  c.world.shape.max_concepts = get<int>(w, "max_concepts");
  c.world.shape.max_rules_per_sample = get<int>(w, "max_rules_per_sample");
  c.world.train_size = get<int>(w, "train_size");
  c.world.harmful_fraction = get<double>(w, "harmful_fraction");
  c.world.train_languages = get<std::vector<int>>(w, "train_languages");
  c.world.mainstream_language = get<int>(w, "mainstream_language");
  const json& r = merged["reward"];
  c.reward.l_best = get<int>(r, "l_best");
  c.reward.w_format = get<double>(r, "w_format");
  c.reward.w_accuracy = get<double>(r, "w_accuracy");
  c.reward.w_length = get<double>(r, "w_length");
  c.reward.w_diversity = get<double>(r, "w_diversity");
  c.reward.gate_on_format = get<bool>(r, "gate_on_format");
  c.reward.ngram_order = get<int>(r, "ngram_order");
  const json& s = merged["sft"];
  c.sft.epochs = get<int>(s, "epochs");
  c.sft.batch_size = get<int>(s, "batch_size");
  c.sft.learning_rate = get<double>(s, "learning_rate");
  c.sft.optimizer = optimizer_from_string(get<std::string>(s, "optimizer"));
  const json& g = merged["grpo"];
  c.grpo.group_size = get<int>(g, "group_size");
  c.grpo.batch_prompts = get<int>(g, "batch_prompts");
  c.grpo.learning_rate = get<double>(g, "learning_rate");
  c.grpo.adv_epsilon = get<double>(g, "adv_epsilon");
  c.grpo.clip_range = get<double>(g, "clip_range");
  c.grpo.kl_coef = get<double>(g, "kl_coef");
  c.grpo.inner_epochs = get<int>(g, "inner_epochs");
  c.grpo.steps = get<int>(g, "steps");
  c.grpo.optimizer = optimizer_from_string(get<std::string>(g, "optimizer"));
  const json& a = merged["cao"];
  c.cao.beta = get<double>(a, "beta");
  c.cao.anchor_weight = get<double>(a, "anchor_weight");
  c.cao.samples_per_prompt = get<int>(a, "samples_per_prompt");
  c.cao.temperature = get<double>(a, "temperature");
  c.cao.learning_rate = get<double>(a, "learning_rate");
  c.cao.epochs = get<int>(a, "epochs");
  c.cao.batch_size = get<int>(a, "batch_size");
  c.cao.algorithm = align_algo_from_string(get<std::string>(a, "algorithm"));
  c.cao.chosen_on_success_prompt = get<bool>(a, "chosen_on_success_prompt");
  c.cao.optimizer = optimizer_from_string(get<std::string>(a, "optimizer"));
  c.pair_languages = get<std::vector<int>>(a, "languages");
  const json& e = merged["eval"];
  c.eval.size = get<int>(e, "size");
  c.eval.decode = decode_from_string(get<std::string>(e, "decode"));
  c.eval.languages = get<std::vector<int>>(e, "languages");
  c.finalize();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

void apply_override(json& document, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &document;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty segment in override key '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    json& child = (*node)[key];
    if (child.is_null()) child = json::object();
    node = &child;
    start = dot + 1;
  }
}

}  // namespace cglab
