#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "hyb/recall.hpp"

namespace hyb {

// One model's evaluation summary. Every field is either populated or null in
// the JSON form; null marks an evaluation that was skipped, never one that
// failed silently. recall_all is the task-weighted mean of the class
// accuracies and is re-derived on load, so a hand-edited report that breaks
// the identity is rejected.
struct EvalReport {
  std::string model;
  uint64_t seed = 0;
  std::map<int64_t, double> ppl_by_length;
  std::optional<double> recall_short;
  std::optional<double> recall_long;
  std::optional<double> recall_all;
  int64_t n_short = 0, n_long = 0;
  std::optional<double> lm_proxy;
};

void set_recall(EvalReport& report, const RecallAccuracy& acc);

std::string eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);

}  // namespace hyb
