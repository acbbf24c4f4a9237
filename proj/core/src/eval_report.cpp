#include "hyb/eval_report.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace hyb {

void set_recall(EvalReport& report, const RecallAccuracy& acc) {
  report.n_short = acc.n_short;
  report.n_long = acc.n_long;
  report.recall_short = acc.n_short > 0 ? std::optional<double>(acc.short_acc()) : std::nullopt;
  report.recall_long = acc.n_long > 0 ? std::optional<double>(acc.long_acc()) : std::nullopt;
  report.recall_all = acc.all_acc();
}

std::string eval_report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["model"] = report.model;
  j["seed"] = report.seed;
  j["ppl_by_length"] = nlohmann::json::object();
  for (const auto& [len, ppl] : report.ppl_by_length)
    j["ppl_by_length"][std::to_string(len)] = ppl;
  if (report.recall_all.has_value()) {
    nlohmann::json r;
    r["all"] = *report.recall_all;
    r["n_long"] = report.n_long;
    r["n_short"] = report.n_short;
    r["short"] = report.recall_short.has_value() ? nlohmann::json(*report.recall_short)
                                                 : nlohmann::json();
    r["long"] =
        report.recall_long.has_value() ? nlohmann::json(*report.recall_long) : nlohmann::json();
    j["recall"] = r;
  } else {
    j["recall"] = nullptr;
  }
  j["lm_proxy"] =
      report.lm_proxy.has_value() ? nlohmann::json(*report.lm_proxy) : nlohmann::json();
  return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("eval report: malformed JSON");
  }
  for (const char* key : {"model", "seed", "ppl_by_length", "recall", "lm_proxy"})
    if (!j.contains(key)) throw std::invalid_argument(std::string("eval report: missing ") + key);

  EvalReport report;
  report.model = j["model"].get<std::string>();
  report.seed = j["seed"].get<uint64_t>();
  for (const auto& [key, val] : j["ppl_by_length"].items()) {
    size_t used = 0;
    const int64_t len = std::stoll(key, &used);
    if (used != key.size() || len < 1)
      throw std::invalid_argument("eval report: bad ppl_by_length key");
    report.ppl_by_length[len] = val.get<double>();
  }
  if (!j["lm_proxy"].is_null()) report.lm_proxy = j["lm_proxy"].get<double>();

  if (!j["recall"].is_null()) {
    const auto& r = j["recall"];
    for (const char* key : {"all", "short", "long", "n_short", "n_long"})
      if (!r.contains(key))
        throw std::invalid_argument(std::string("eval report: recall missing ") + key);
    report.n_short = r["n_short"].get<int64_t>();
    report.n_long = r["n_long"].get<int64_t>();
    if (!r["short"].is_null()) report.recall_short = r["short"].get<double>();
    if (!r["long"].is_null()) report.recall_long = r["long"].get<double>();
    report.recall_all = r["all"].get<double>();

    if (report.n_short < 0 || report.n_long < 0 || report.n_short + report.n_long == 0)
      throw std::invalid_argument("eval report: recall needs positive task counts");
    if ((report.n_short > 0) != report.recall_short.has_value() ||
        (report.n_long > 0) != report.recall_long.has_value())
      throw std::invalid_argument("eval report: recall class accuracy does not match its count");
    const double weighted = (report.recall_short.value_or(0.0) * report.n_short +
                             report.recall_long.value_or(0.0) * report.n_long) /
                            (report.n_short + report.n_long);
    if (std::abs(weighted - *report.recall_all) > 1e-9)
      throw std::invalid_argument("eval report: recall_all is not the task-weighted mean");
  }
  return report;
}

}  // namespace hyb
