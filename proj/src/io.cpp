#include "cglab/io.hpp"

#include <fstream>
#include <sstream>

namespace cglab {

json to_json(const BaseSample& s) {
  return json{{"sample_id", s.sample_id},
              {"concepts", s.concepts},
              {"gold_verdict", std::string(to_string(s.gold_verdict))},
              {"matched_rules", s.matched_rules}};
}

BaseSample base_sample_from_json(const json& j) {
  BaseSample s;
  s.sample_id = j.at("sample_id").get<std::int64_t>();
  s.concepts = j.at("concepts").get<std::vector<int>>();
  s.gold_verdict = verdict_from_string(j.at("gold_verdict").get<std::string>());
  s.matched_rules = j.at("matched_rules").get<std::vector<int>>();
  if (s.gold_verdict == Verdict::kInvalid) throw LoadError("corpus verdict must be HARMFUL or SAFE");
  return s;
}

json to_json(const VocabSpec& v) {
  return json{{"num_languages", v.num_languages},
              {"concepts_per_language", v.concepts_per_language},
              {"num_rules", v.num_rules},
              {"vocab_size", v.size()}};
}

VocabSpec vocab_from_json(const json& j) {
  VocabSpec v;
  v.num_languages = j.at("num_languages").get<int>();
  v.concepts_per_language = j.at("concepts_per_language").get<int>();
  v.num_rules = j.at("num_rules").get<int>();
  v.validate();
  return v;
}

json to_json(const RuleSet& r) { return json(r.rules); }

RuleSet rules_from_json(const json& j) {
  RuleSet r;
  r.rules = j.get<std::vector<std::vector<int>>>();
  return r;
}

json to_json(const AlignmentQuadruple& q) {
  return json{{"sample_id", q.sample_id},
              {"failure_lang", q.failure_lang},
              {"success_lang", q.success_lang},
              {"failure_index", q.failure_index},
              {"success_index", q.success_index},
              {"gold", std::string(to_string(q.gold))},
              {"input", q.input},
              {"rejected", q.rejected},
              {"chosen", q.chosen},
              {"anchor", q.anchor},
              {"anchor_prompt_len", q.anchor_prompt_len}};
}

AlignmentQuadruple quadruple_from_json(const json& j) {
  AlignmentQuadruple q;
  q.sample_id = j.at("sample_id").get<std::int64_t>();
  q.failure_lang = j.at("failure_lang").get<int>();
  q.success_lang = j.at("success_lang").get<int>();
  q.failure_index = j.at("failure_index").get<int>();
  q.success_index = j.at("success_index").get<int>();
  q.gold = verdict_from_string(j.at("gold").get<std::string>());
  q.input = j.at("input").get<TokenSeq>();
  q.rejected = j.at("rejected").get<TokenSeq>();
  q.chosen = j.at("chosen").get<TokenSeq>();
  q.anchor = j.at("anchor").get<TokenSeq>();
  q.anchor_prompt_len = j.at("anchor_prompt_len").get<int>();
  return q;
}

json to_json(const EvalReport& r) {
  json langs = json::array();
  for (const auto& l : r.languages)
    langs.push_back({{"language", l.language},
                     {"macro_f1", l.macro_f1},
                     {"f1_harmful", l.f1_harmful},
                     {"f1_safe", l.f1_safe},
                     {"invalid_rate", l.invalid_rate},
                     {"n", l.n}});
  return json{{"stage", r.stage},
              {"checkpoint", r.checkpoint},
              {"languages", langs},
              {"gap", r.gap},
              {"consistency", r.consistency ? json(*r.consistency) : json(nullptr)}};
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  r.stage = j.at("stage").get<std::string>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
  for (const auto& l : j.at("languages")) {
    LanguageResult x;
    x.language = l.at("language").get<int>();
    x.macro_f1 = l.at("macro_f1").get<double>();
    x.f1_harmful = l.at("f1_harmful").get<double>();
    x.f1_safe = l.at("f1_safe").get<double>();
    x.invalid_rate = l.at("invalid_rate").get<double>();
    x.n = l.at("n").get<int>();
    r.languages.push_back(x);
  }
  r.gap = j.at("gap").get<double>();
  if (!j.at("consistency").is_null()) r.consistency = j.at("consistency").get<double>();
  return r;
}

std::string to_jsonl(std::span<const json> records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

std::vector<json> parse_jsonl(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw LoadError("malformed JSON on line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArtifactError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_artifact(const std::filesystem::path& path, const std::string& content) {
  if (std::filesystem::exists(path)) {
    if (read_file(path) == content) return;
    throw ArtifactError("refusing to overwrite existing artifact " + path.string() +
                        " with different content");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ArtifactError("cannot write " + tmp);
    f << content;
    if (!f) throw ArtifactError("short write on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void MetricsLog::append(const json& record) const {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream f(path_, std::ios::binary | std::ios::app);
  if (!f) throw ArtifactError("cannot append to " + path_.string());
  f << record.dump() << '\n';
}

std::vector<json> MetricsLog::read() const {
  if (!std::filesystem::exists(path_)) return {};
  return parse_jsonl(read_file(path_));
}

}  // namespace cglab
