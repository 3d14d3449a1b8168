#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cglab/cao.hpp"
#include "cglab/eval.hpp"
#include "cglab/world.hpp"

namespace cglab {

using json = nlohmann::json;

json to_json(const BaseSample& s);
BaseSample base_sample_from_json(const json& j);

json to_json(const VocabSpec& v);
VocabSpec vocab_from_json(const json& j);

json to_json(const RuleSet& r);
RuleSet rules_from_json(const json& j);

json to_json(const AlignmentQuadruple& q);
AlignmentQuadruple quadruple_from_json(const json& j);

json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const json& j);

// One compact JSON document per line.
std::string to_jsonl(std::span<const json> records);
std::vector<json> parse_jsonl(const std::string& text);

std::string read_file(const std::filesystem::path& path);
// Writes `content` unless the file already exists. An existing file with
// identical content is accepted; any other existing file is an ArtifactError.
void write_artifact(const std::filesystem::path& path, const std::string& content);

// Append-only JSON-lines metrics log.
class MetricsLog {
 public:
  explicit MetricsLog(std::filesystem::path path) : path_(std::move(path)) {}
  void append(const json& record) const;
  std::vector<json> read() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace cglab
