#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hyb/eval_report.hpp"
#include "hyb/model.hpp"
#include "hyb/stats.hpp"
#include "hyb/tensor.hpp"

namespace hyb {

// ---------------------------------------------------------------------------
// Branch similarity

struct SimilarityPoint {
  double depth_frac = 0.0;  // distance from the final block, 1 = first, 0 = last
  double mean_cosine = 0.0;
};

struct SimilarityCurve {
  std::string model;
  int64_t n_samples = 0;
  std::vector<SimilarityPoint> points;  // one per block, in block order
};

// Uniformly placed length-`len` windows over a token stream, as an [n, len]
// batch. The same draw feeds every analysis so models see identical data.
Tensor<int32_t> sample_windows(const std::vector<int32_t>& tokens, int64_t n, int64_t len,
                               uint64_t seed);

// Cosine between the first M-bearing and first S-bearing sub-layer outputs of
// each block (parallel blocks: the branch outputs before aggregation),
// averaged over tokens and samples. Token pairs where exactly one side is the
// zero vector count as cosine 0; two zero vectors count as 1.
template <typename T>
SimilarityCurve branch_cosine_similarity(const Model<T>& m, const Tensor<int32_t>& samples) {
  if (samples.rank() != 2)
    throw std::invalid_argument("branch_cosine_similarity: samples must be [N,T]");
  const int nblocks = static_cast<int>(m.blocks.size());

  ForwardOptions opt;
  for (int b = 0; b < nblocks; ++b) {
    opt.taps.push_back({b, TapSite::BranchM});
    opt.taps.push_back({b, TapSite::BranchS});
  }
  std::vector<TapValue<T>> taps;
  model_forward(m, samples, opt, &taps);

  auto tap_of = [&](int block, TapSite site) -> const Tensor<T>& {
    for (const auto& tv : taps)
      if (tv.block == block && tv.site == site) return tv.value;
    throw std::logic_error("branch_cosine_similarity: tap not recorded");
  };

  const int64_t rows = samples.dim(0) * samples.dim(1), d = m.dims.d;
  SimilarityCurve curve;
  curve.model = render_block_spec(m.spec);
  curve.n_samples = samples.dim(0);
  for (int b = 0; b < nblocks; ++b) {
    const Tensor<T>& tm = tap_of(b, TapSite::BranchM);
    const Tensor<T>& ts = tap_of(b, TapSite::BranchS);
    double acc = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
      const T* vm = tm.data() + r * d;
      const T* vs = ts.data() + r * d;
      double dot = 0.0, nm = 0.0, ns = 0.0;
      for (int64_t i = 0; i < d; ++i) {
        dot += static_cast<double>(vm[i]) * vs[i];
        nm += static_cast<double>(vm[i]) * vm[i];
        ns += static_cast<double>(vs[i]) * vs[i];
      }
      if (nm == 0.0 && ns == 0.0)
        acc += 1.0;
      else if (nm > 0.0 && ns > 0.0)
        acc += dot / std::sqrt(nm * ns);
    }
    SimilarityPoint pt;
    pt.depth_frac =
        static_cast<double>(nblocks - 1 - b) / static_cast<double>(std::max(1, nblocks - 1));
    pt.mean_cosine = acc / static_cast<double>(rows);
    curve.points.push_back(pt);
  }
  return curve;
}

std::string similarity_csv(const SimilarityCurve& curve);

// ---------------------------------------------------------------------------
// Removal sweep

enum class SiteKind { SubLayer, AggToAvg };

struct AblationSite {
  SiteKind kind = SiteKind::SubLayer;
  int block = 0;
  int sublayer = 0;  // SubLayer only, index into spec.sublayers()
};

struct AblationRow {
  std::string site;  // "none", "block1", "block1.sub0", "block1.agg_avg"
  double position_frac = 0.0;
  double metric_before = 0.0;
  double metric_after = 0.0;
  double degradation = 0.0;  // (before - after) / before
  bool degradation_defined = true;
};

struct AblationReport {
  std::string model;
  std::vector<AblationRow> rows;
};

std::string ablation_csv(const AblationReport& report);

// eval_fn scores the model with the given structural edits applied; higher
// must mean better for the degradation sign to be meaningful. The sweep
// always covers every whole block plus the requested extra sites, after a
// sentinel row that re-evaluates the unedited model.
template <typename T>
AblationReport block_removal_sweep(
    const Model<T>& m, const std::function<double(const Model<T>&, const ForwardOptions&)>& eval_fn,
    const std::vector<AblationSite>& extra_sites) {
  const int nblocks = static_cast<int>(m.blocks.size());
  const int nsub = static_cast<int>(m.spec.sublayers().size());
  for (const auto& site : extra_sites) {
    if (site.block < 0 || site.block >= nblocks)
      throw std::invalid_argument("sweep: site block out of range");
    if (site.kind == SiteKind::SubLayer && (site.sublayer < 0 || site.sublayer >= nsub))
      throw std::invalid_argument("sweep: sub-layer site out of range");
    if (site.kind == SiteKind::AggToAvg && !m.spec.parallel)
      throw std::invalid_argument("sweep: aggregator site needs a parallel block");
  }

  const double before = eval_fn(m, ForwardOptions{});
  AblationReport report;
  report.model = render_block_spec(m.spec);

  // The sentinel removes nothing, so its degradation is 0 by definition; any
  // other row needs a positive baseline for the ratio to mean anything.
  auto push = [&](std::string site, int block, double after, bool sentinel = false) {
    AblationRow row;
    row.site = std::move(site);
    row.position_frac =
        block < 0 ? 0.0
                  : static_cast<double>(block) / static_cast<double>(std::max(1, nblocks - 1));
    row.metric_before = before;
    row.metric_after = after;
    if (sentinel) {
      row.degradation = 0.0;
    } else if (before > 0.0) {
      row.degradation = (before - after) / before;
    } else {
      row.degradation_defined = false;
    }
    report.rows.push_back(std::move(row));
  };

  push("none", -1, eval_fn(m, ForwardOptions{}), true);
  for (int b = 0; b < nblocks; ++b) {
    ForwardOptions opt;
    opt.removed_blocks.push_back(b);
    push("block" + std::to_string(b), b, eval_fn(m, opt));
  }
  for (const auto& site : extra_sites) {
    if (site.kind == SiteKind::SubLayer) {
      ForwardOptions opt;
      opt.removed_sublayers.push_back({site.block, site.sublayer});
      push("block" + std::to_string(site.block) + ".sub" + std::to_string(site.sublayer),
           site.block, eval_fn(m, opt));
    } else {
      Model<T> downgraded = m;
      downgraded.blocks[static_cast<size_t>(site.block)].agg = Aggregation::Avg;
      push("block" + std::to_string(site.block) + ".agg_avg", site.block,
           eval_fn(downgraded, ForwardOptions{}));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Attending weight

// Materializes the attention pattern hidden in every SSM layer, normalizes
// each row by its absolute sum, and returns the mean mass on strictly
// previous tokens (s < t), averaged over tokens, layers, channels and
// samples. Rows whose absolute sum is zero contribute mass 0.
template <typename T>
double avg_attending_weight(const Model<T>& m, const Tensor<int32_t>& samples) {
  if (samples.rank() != 2) throw std::invalid_argument("avg_attending_weight: samples must be [N,T]");
  if (!m.spec.has_kind(LayerKind::Mamba))
    throw std::invalid_argument("avg_attending_weight: model has no SSM layer");
  const int64_t N = samples.dim(0), Tn = samples.dim(1), d = m.dims.d;
  if (Tn > kHiddenAttnMaxT)
    throw std::invalid_argument("avg_attending_weight: sequence too long to materialize");

  ModelCache<T> cache;
  model_forward(m, samples, {}, nullptr, &cache);

  double sum = 0.0;
  int64_t rows_seen = 0;
  auto scan_layer = [&](const SsmParams<T>& p, const Tensor<T>& x) {
    Tensor<T> xs({Tn, d});
    for (int64_t b = 0; b < N; ++b) {
      const T* src = x.data() + b * Tn * d;
      for (int64_t i = 0; i < Tn * d; ++i) xs[i] = src[i];
      for (int64_t c = 0; c < d; ++c) {
        const Tensor<T> alpha = ssm_hidden_attention(p, xs, c);
        for (int64_t t = 0; t < Tn; ++t) {
          double denom = 0.0, prev = 0.0;
          for (int64_t s = 0; s <= t; ++s) {
            const double a = std::abs(static_cast<double>(alpha[t * Tn + s]));
            denom += a;
            if (s < t) prev += a;
          }
          if (denom > 0.0) sum += prev / denom;
          ++rows_seen;
        }
      }
    }
  };

  for (size_t bi = 0; bi < m.blocks.size(); ++bi) {
    const Block<T>& blk = m.blocks[bi];
    const BlockCache<T>& bc = cache.blocks[bi];
    if (!m.spec.parallel) {
      for (size_t j = 0; j < blk.seq.size(); ++j)
        if (blk.seq[j].kind == LayerKind::Mamba) scan_layer(blk.seq[j].ssm, bc.seq[j].ssm.x);
    } else {
      for (size_t j = 0; j < blk.bm.size(); ++j)
        if (blk.bm[j].kind == LayerKind::Mamba) scan_layer(blk.bm[j].ssm, bc.bm[j].ssm.x);
      for (size_t j = 0; j < blk.bs.size(); ++j)
        if (blk.bs[j].kind == LayerKind::Mamba) scan_layer(blk.bs[j].ssm, bc.bs[j].ssm.x);
    }
  }
  return sum / static_cast<double>(rows_seen);
}

std::string attend_weight_csv(const std::vector<std::pair<std::string, double>>& weights);

// ---------------------------------------------------------------------------
// Axis correlation

struct AxesCorrelation {
  // axes[0] = negated lm_proxy perplexity, axes[1] = recall_all,
  // axes[2] = negated perplexity at the longest length shared by all reports
  std::vector<std::string> axes;
  double r[3][3] = {};
  std::string scatter_csv;  // model,recall,lm_proxy,class
};

AxesCorrelation axes_correlation(const std::vector<EvalReport>& reports);

// Coarse family of an architecture string: "parallel-hybrid",
// "sequential-hybrid", "ssm", "attention" or "ff".
std::string model_class(const std::string& arch);

}  // namespace hyb
