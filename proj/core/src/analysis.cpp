#include "hyb/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "hyb/block_spec.hpp"
#include "hyb/rng.hpp"

namespace hyb {

namespace {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Tensor<int32_t> sample_windows(const std::vector<int32_t>& tokens, int64_t n, int64_t len,
                               uint64_t seed) {
  if (n < 1 || len < 1) throw std::invalid_argument("sample_windows: n and len must be >= 1");
  if (static_cast<int64_t>(tokens.size()) < len)
    throw std::invalid_argument("sample_windows: corpus shorter than the window");
  Rng rng(seed);
  const int64_t starts = static_cast<int64_t>(tokens.size()) - len + 1;
  Tensor<int32_t> out({n, len});
  for (int64_t i = 0; i < n; ++i) {
    const int64_t at = rng.uniform_int(starts);
    for (int64_t t = 0; t < len; ++t) out[i * len + t] = tokens[static_cast<size_t>(at + t)];
  }
  return out;
}

std::string similarity_csv(const SimilarityCurve& curve) {
  std::string out = "depth_frac,cosine\n";
  for (const auto& pt : curve.points)
    out += fmt_g17(pt.depth_frac) + "," + fmt_g17(pt.mean_cosine) + "\n";
  return out;
}

std::string ablation_csv(const AblationReport& report) {
  std::string out = "site,metric_before,metric_after,degradation\n";
  for (const auto& row : report.rows) {
    out += row.site + "," + fmt_g17(row.metric_before) + "," + fmt_g17(row.metric_after) + ",";
    out += row.degradation_defined ? fmt_g17(row.degradation) : std::string("undefined");
    out += "\n";
  }
  return out;
}

std::string attend_weight_csv(const std::vector<std::pair<std::string, double>>& weights) {
  std::string out = "model,attend_weight\n";
  for (const auto& [model, w] : weights) out += model + "," + fmt_g17(w) + "\n";
  return out;
}

std::string model_class(const std::string& arch) {
  const BlockSpec spec = parse_block_spec(arch);
  if (spec.parallel) return "parallel-hybrid";
  const bool has_m = spec.has_kind(LayerKind::Mamba);
  const bool has_s = spec.has_kind(LayerKind::Swa);
  if (has_m && has_s) return "sequential-hybrid";
  if (has_m) return "ssm";
  if (has_s) return "attention";
  return "ff";
}

AxesCorrelation axes_correlation(const std::vector<EvalReport>& reports) {
  if (reports.size() < 3)
    throw std::invalid_argument("axes_correlation: need at least 3 reports");
  for (const auto& r : reports) {
    if (!r.lm_proxy.has_value())
      throw std::invalid_argument("axes_correlation: report '" + r.model + "' has no lm_proxy");
    if (!r.recall_all.has_value())
      throw std::invalid_argument("axes_correlation: report '" + r.model + "' has no recall");
    if (r.ppl_by_length.empty())
      throw std::invalid_argument("axes_correlation: report '" + r.model +
                                  "' has no ppl_by_length");
  }

  // Longest context length every report measured.
  std::set<int64_t> shared;
  for (const auto& [len, ppl] : reports[0].ppl_by_length) shared.insert(len);
  for (const auto& r : reports) {
    std::set<int64_t> keep;
    for (const auto& [len, ppl] : r.ppl_by_length)
      if (shared.count(len)) keep.insert(len);
    shared = std::move(keep);
  }
  if (shared.empty())
    throw std::invalid_argument("axes_correlation: no context length shared by all reports");
  const int64_t long_len = *shared.rbegin();

  std::vector<double> lm, recall, long_ppl;
  for (const auto& r : reports) {
    lm.push_back(-*r.lm_proxy);  // lower perplexity = better
    recall.push_back(*r.recall_all);
    long_ppl.push_back(-r.ppl_by_length.at(long_len));
  }

  AxesCorrelation out;
  out.axes = {"neg_lm_proxy", "recall_all", "neg_ppl_" + std::to_string(long_len)};
  const std::vector<double>* axis[3] = {&lm, &recall, &long_ppl};
  for (int i = 0; i < 3; ++i) {
    out.r[i][i] = 1.0;
    for (int j = i + 1; j < 3; ++j) out.r[i][j] = out.r[j][i] = pearson(*axis[i], *axis[j]);
  }

  out.scatter_csv = "model,recall,lm_proxy,class\n";
  for (const auto& r : reports)
    out.scatter_csv += r.model + "," + fmt_g17(*r.recall_all) + "," + fmt_g17(*r.lm_proxy) + "," +
                       model_class(r.model) + "\n";
  return out;
}

}  // namespace hyb
