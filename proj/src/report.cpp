#include "cglab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace cglab {

namespace {

int rank(const std::string& name) {
  static const std::vector<std::string> order = {"sft", "grpo", "align_dpo", "align_cao"};
  auto it = std::find(order.begin(), order.end(), name);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

std::string label_for(const std::string& name) {
  if (name == "sft") return "SFT only";
  if (name == "grpo") return "w/o alignment";
  if (name == "align_dpo") return "w/ DPO";
  if (name == "align_cao") return "w/ CAO";
  return name;
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, x);
  return buf;
}

json opt(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

Summary build_summary(const std::string& run_id, std::vector<EvalReport> reports, int mainstream_language) {
  if (reports.empty()) throw ArtifactError("no eval reports found");
  std::stable_sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    return std::make_pair(rank(a.checkpoint), a.checkpoint) < std::make_pair(rank(b.checkpoint), b.checkpoint);
  });
  const EvalReport* unaligned = nullptr;
  for (const auto& r : reports)
    if (r.checkpoint == "grpo") unaligned = &r;

  Summary s;
  s.run_id = run_id;
  s.mainstream_language = mainstream_language;
  for (const auto& r : reports) {
    SummaryRow row;
    row.checkpoint = r.checkpoint;
    row.label = label_for(r.checkpoint);
    row.gap = r.gap;
    row.consistency = r.consistency;
    double sum = 0.0, sum_nm = 0.0;
    int n_nm = 0;
    for (const auto& l : r.languages) {
      SummaryLanguage sl{l.language, l.macro_f1, l.invalid_rate, std::nullopt};
      if (unaligned && r.checkpoint.rfind("align", 0) == 0) {
        for (const auto& u : unaligned->languages)
          if (u.language == l.language) sl.delta = l.macro_f1 - u.macro_f1;
      }
      row.languages.push_back(sl);
      sum += l.macro_f1;
      if (l.language != mainstream_language) {
        sum_nm += l.macro_f1;
        ++n_nm;
      }
    }
    row.mean_macro_f1 = r.languages.empty() ? 0.0 : sum / static_cast<double>(r.languages.size());
    row.mean_non_mainstream = n_nm ? sum_nm / n_nm : 0.0;
    s.rows.push_back(std::move(row));
  }
  const SummaryRow* cao = nullptr;
  const SummaryRow* dpo = nullptr;
  for (const auto& row : s.rows) {
    if (row.checkpoint == "align_cao") cao = &row;
    if (row.checkpoint == "align_dpo") dpo = &row;
  }
  if (cao && dpo)
    s.dominance = Dominance{cao->mean_non_mainstream, dpo->mean_non_mainstream,
                            cao->mean_non_mainstream < dpo->mean_non_mainstream};
  return s;
}

json to_json(const Summary& s) {
  json rows = json::array();
  for (const auto& r : s.rows) {
    json langs = json::array();
    for (const auto& l : r.languages)
      langs.push_back({{"language", l.language},
                       {"macro_f1", l.macro_f1},
                       {"invalid_rate", l.invalid_rate},
                       {"delta", opt(l.delta)}});
    rows.push_back({{"checkpoint", r.checkpoint},
                    {"label", r.label},
                    {"languages", langs},
                    {"mean_macro_f1", r.mean_macro_f1},
                    {"mean_non_mainstream", r.mean_non_mainstream},
                    {"gap", r.gap},
                    {"consistency", opt(r.consistency)}});
  }
  json dom = nullptr;
  if (s.dominance)
    dom = {{"cao", s.dominance->cao}, {"dpo", s.dominance->dpo}, {"flagged", s.dominance->flagged}};
  return {{"run_id", s.run_id}, {"mainstream_language", s.mainstream_language}, {"rows", rows}, {"dominance", dom}};
}

Summary summary_from_json(const json& j) {
  Summary s;
  s.run_id = j.at("run_id").get<std::string>();
  s.mainstream_language = j.at("mainstream_language").get<int>();
  for (const auto& r : j.at("rows")) {
    SummaryRow row;
    row.checkpoint = r.at("checkpoint").get<std::string>();
    row.label = r.at("label").get<std::string>();
    for (const auto& l : r.at("languages"))
      row.languages.push_back({l.at("language").get<int>(), l.at("macro_f1").get<double>(),
                               l.at("invalid_rate").get<double>(), opt_from(l.at("delta"))});
    row.mean_macro_f1 = r.at("mean_macro_f1").get<double>();
    row.mean_non_mainstream = r.at("mean_non_mainstream").get<double>();
    row.gap = r.at("gap").get<double>();
    row.consistency = opt_from(r.at("consistency"));
    s.rows.push_back(std::move(row));
  }
  if (!j.at("dominance").is_null()) {
    const json& d = j.at("dominance");
    s.dominance = Dominance{d.at("cao").get<double>(), d.at("dpo").get<double>(), d.at("flagged").get<bool>()};
  }
  return s;
}

std::string render_table(const Summary& s) {
  std::string out = "run " + s.run_id + "\n";
  std::map<int, std::vector<std::pair<const SummaryRow*, const SummaryLanguage*>>> blocks;
  for (const auto& r : s.rows)
    for (const auto& l : r.languages) blocks[l.language].push_back({&r, &l});
  char line[160];
  for (const auto& [lang, rows] : blocks) {
    std::snprintf(line, sizeof(line), "\nlanguage %d%s\n", lang, lang == s.mainstream_language ? " (mainstream)" : "");
    out += line;
    std::snprintf(line, sizeof(line), "  %-16s %9s %9s %9s\n", "condition", "macro-F1", "invalid", "delta");
    out += line;
    for (const auto& [row, l] : rows) {
      std::snprintf(line, sizeof(line), "  %-16s %9.4f %9.4f %9s\n", row->label.c_str(), l->macro_f1,
                    l->invalid_rate, l->delta ? fmt("%+.4f", *l->delta).c_str() : "-");
      out += line;
    }
  }
  std::snprintf(line, sizeof(line), "\n  %-16s %9s %9s %9s %11s\n", "condition", "mean", "non-main", "gap",
                "consistency");
  out += line;
  for (const auto& r : s.rows) {
    std::snprintf(line, sizeof(line), "  %-16s %9.4f %9.4f %9.4f %11s\n", r.label.c_str(), r.mean_macro_f1,
                  r.mean_non_mainstream, r.gap, r.consistency ? fmt("%.4f", *r.consistency).c_str() : "n/a");
    out += line;
  }
  if (s.dominance) {
    std::snprintf(line, sizeof(line), "\nCAO vs DPO (mean non-mainstream macro-F1): %.4f vs %.4f  %s\n",
                  s.dominance->cao, s.dominance->dpo, s.dominance->flagged ? "FLAGGED" : "ok");
    out += line;
  }
  return out;
}

std::string render_csv(const Summary& s) {
  std::string out = "checkpoint,label,language,macro_f1\n";
  char line[160];
  for (const auto& r : s.rows)
    for (const auto& l : r.languages) {
      std::snprintf(line, sizeof(line), "%s,%s,%d,%.17g\n", r.checkpoint.c_str(), r.label.c_str(), l.language,
                    l.macro_f1);
      out += line;
    }
  return out;
}

}  // namespace cglab
