#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cglab/eval.hpp"
#include "cglab/io.hpp"

namespace cglab {

struct SummaryLanguage {
  int language = 0;
  double macro_f1 = 0.0;
  double invalid_rate = 0.0;
  // macro_f1 minus the unaligned (grpo) checkpoint's, for alignment rows.
  std::optional<double> delta;

  bool operator==(const SummaryLanguage&) const = default;
};

struct SummaryRow {
  std::string checkpoint;
  std::string label;
  std::vector<SummaryLanguage> languages;
  double mean_macro_f1 = 0.0;
  double mean_non_mainstream = 0.0;
  double gap = 0.0;
  std::optional<double> consistency;

  bool operator==(const SummaryRow&) const = default;
};

struct Dominance {
  double cao = 0.0;
  double dpo = 0.0;
  bool flagged = false;  // CAO below DPO on mean non-mainstream macro-F1

  bool operator==(const Dominance&) const = default;
};

struct Summary {
  std::string run_id;
  int mainstream_language = 0;
  std::vector<SummaryRow> rows;
  std::optional<Dominance> dominance;

  bool operator==(const Summary&) const = default;
};

// Rows ordered sft, grpo, align_dpo, align_cao, then any others by name.
Summary build_summary(const std::string& run_id, std::vector<EvalReport> reports, int mainstream_language);

json to_json(const Summary& s);
Summary summary_from_json(const json& j);

// Per-language blocks, one row per checkpoint, then a per-checkpoint footer.
std::string render_table(const Summary& s);
// checkpoint,label,language,macro_f1 rows for plotting.
std::string render_csv(const Summary& s);

}  // namespace cglab
