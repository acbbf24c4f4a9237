#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "hyb/attention.hpp"
#include "hyb/block_spec.hpp"
#include "hyb/ff.hpp"
#include "hyb/norm.hpp"
#include "hyb/rng.hpp"
#include "hyb/ssm.hpp"
#include "hyb/tensor.hpp"

namespace hyb {

struct ModelDims {
  int64_t vocab = 256;
  int64_t d = 64;
  int64_t n = 0;  // 0 picks default_state_count(d)
  int64_t heads = 4;
  int64_t window = 128;
  int64_t blocks = 2;
};

// State count that puts an M layer's parameter budget on par with an S
// layer's 4*d^2: d*(3n+1) = 4*d^2 at n = (4d-1)/3, rounded to an integer.
inline int64_t default_state_count(int64_t d) {
  return static_cast<int64_t>(std::llround((4.0 * static_cast<double>(d) - 1.0) / 3.0));
}

template <typename T>
struct SubLayer {
  LayerKind kind = LayerKind::Ff;
  NormParams<T> norm;  // pre-norm; empty for the first layer of a parallel branch
  SsmParams<T> ssm;
  AttnParams<T> attn;
  FfParams<T> ff;
};

template <typename T>
struct Block {
  // sequential form
  std::vector<SubLayer<T>> seq;
  // parallel form
  NormParams<T> in_norm;
  std::vector<SubLayer<T>> bm, bs;
  Aggregation agg = Aggregation::Avg;
  Tensor<T> proj_w;      // [d, 2d], Proj aggregation
  AttnParams<T> merge;   // MergeAttn aggregation
};

template <typename T>
struct Model {
  BlockSpec spec;
  ModelDims dims;
  Tensor<T> embed;    // [V, d]
  Tensor<T> unembed;  // [V, d]
  NormParams<T> final_norm;
  std::vector<Block<T>> blocks;

  // Visits every parameter tensor with a stable name. The visit order is the
  // contract for checkpoints and optimizer state; do not reorder.
  template <typename F>
  void for_each_param(F&& f) {
    visit_params(*this, f);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    visit_params(const_cast<Model&>(*this), [&](const std::string& name, Tensor<T>& t) {
      f(name, static_cast<const Tensor<T>&>(t));
    });
  }

  int64_t param_count() const {
    int64_t total = 0;
    for_each_param([&](const std::string&, const Tensor<T>& t) { total += t.size(); });
    return total;
  }

 private:
  template <typename F>
  static void visit_sublayer(SubLayer<T>& sl, const std::string& prefix, F&& f) {
    if (!sl.norm.gain.empty()) f(prefix + "norm.gain", sl.norm.gain);
    switch (sl.kind) {
      case LayerKind::Mamba:
        f(prefix + "ssm.a_log", sl.ssm.a_log);
        if (sl.ssm.lti) {
          f(prefix + "ssm.b_const", sl.ssm.b_const);
          f(prefix + "ssm.c_const", sl.ssm.c_const);
          f(prefix + "ssm.dt", sl.ssm.dt);
        } else {
          f(prefix + "ssm.b_w", sl.ssm.b_w);
          f(prefix + "ssm.c_w", sl.ssm.c_w);
          f(prefix + "ssm.dt_w", sl.ssm.dt_w);
        }
        break;
      case LayerKind::Swa:
        f(prefix + "attn.wq", sl.attn.wq);
        f(prefix + "attn.wk", sl.attn.wk);
        f(prefix + "attn.wv", sl.attn.wv);
        f(prefix + "attn.wo", sl.attn.wo);
        break;
      case LayerKind::Ff:
        f(prefix + "ff.w1", sl.ff.w1);
        f(prefix + "ff.w2", sl.ff.w2);
        break;
    }
  }

  template <typename F>
  static void visit_params(Model& m, F&& f) {
    f("embed", m.embed);
    for (size_t i = 0; i < m.blocks.size(); ++i) {
      Block<T>& blk = m.blocks[i];
      const std::string bp = "block" + std::to_string(i) + ".";
      if (!m.spec.parallel) {
        for (size_t j = 0; j < blk.seq.size(); ++j)
          visit_sublayer(blk.seq[j], bp + "seq" + std::to_string(j) + ".", f);
      } else {
        f(bp + "in_norm.gain", blk.in_norm.gain);
        for (size_t j = 0; j < blk.bm.size(); ++j)
          visit_sublayer(blk.bm[j], bp + "m" + std::to_string(j) + ".", f);
        for (size_t j = 0; j < blk.bs.size(); ++j)
          visit_sublayer(blk.bs[j], bp + "s" + std::to_string(j) + ".", f);
        if (blk.agg == Aggregation::Proj) f(bp + "proj.w", blk.proj_w);
        if (blk.agg == Aggregation::MergeAttn) {
          f(bp + "merge.wq", blk.merge.wq);
          f(bp + "merge.wk", blk.merge.wk);
          f(bp + "merge.wv", blk.merge.wv);
          f(bp + "merge.wo", blk.merge.wo);
        }
      }
    }
    f("final_norm.gain", m.final_norm.gain);
    f("unembed", m.unembed);
  }
};

namespace detail {

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, double stddev) {
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal() * stddev);
}

// Slowest state starts near Abar = 1 so fresh models can already carry
// information across tens of steps; faster states fill in the spectrum.
inline double init_a_log(int64_t state_idx) {
  return std::log(0.05 + static_cast<double>(state_idx));
}

template <typename T>
SubLayer<T> make_sublayer(LayerKind kind, const ModelDims& dims, bool with_norm, Rng& rng) {
  SubLayer<T> sl;
  sl.kind = kind;
  if (with_norm) {
    sl.norm.gain = Tensor<T>({dims.d});
    sl.norm.gain.fill(T(1));
  }
  switch (kind) {
    case LayerKind::Mamba: {
      sl.ssm = make_ssm_selective<T>(dims.d, dims.n);
      for (int64_t c = 0; c < dims.d; ++c)
        for (int64_t i = 0; i < dims.n; ++i)
          sl.ssm.a_log[c * dims.n + i] = static_cast<T>(init_a_log(i));
      fill_normal(sl.ssm.b_w, rng, 0.02);
      fill_normal(sl.ssm.c_w, rng, 0.02);
      fill_normal(sl.ssm.dt_w, rng, 0.02);
      break;
    }
    case LayerKind::Swa: {
      sl.attn = make_attn<T>(dims.d, dims.heads, dims.window);
      fill_normal(sl.attn.wq, rng, 0.02);
      fill_normal(sl.attn.wk, rng, 0.02);
      fill_normal(sl.attn.wv, rng, 0.02);
      fill_normal(sl.attn.wo, rng, 0.02);
      break;
    }
    case LayerKind::Ff: {
      sl.ff.w1 = Tensor<T>({4 * dims.d, dims.d});
      sl.ff.w2 = Tensor<T>({dims.d, 4 * dims.d});
      fill_normal(sl.ff.w1, rng, 0.02);
      fill_normal(sl.ff.w2, rng, 0.02);
      break;
    }
  }
  return sl;
}

}  // namespace detail

template <typename T>
Model<T> build_model(const BlockSpec& spec, ModelDims dims, uint64_t seed) {
  if (dims.n == 0) dims.n = default_state_count(dims.d);
  if (dims.vocab < 2) throw std::invalid_argument("build_model: vocab must be >= 2");
  if (dims.d < 1 || dims.n < 1 || dims.blocks < 1)
    throw std::invalid_argument("build_model: d, n and blocks must be >= 1");
  const bool needs_attn =
      spec.has_kind(LayerKind::Swa) || (spec.parallel && spec.agg == Aggregation::MergeAttn);
  if (needs_attn) {
    if (dims.heads < 1 || dims.d % dims.heads != 0)
      throw std::invalid_argument("build_model: heads must divide d");
  }
  if (spec.has_kind(LayerKind::Swa) && dims.window < 1)
    throw std::invalid_argument("build_model: S layers need window >= 1");

  Model<T> m;
  m.spec = spec;
  m.dims = dims;
  Rng rng(seed);

  m.embed = Tensor<T>({dims.vocab, dims.d});
  detail::fill_normal(m.embed, rng, 0.02);

  for (int64_t b = 0; b < dims.blocks; ++b) {
    Block<T> blk;
    blk.agg = spec.agg;
    if (!spec.parallel) {
      for (LayerKind k : spec.seq)
        blk.seq.push_back(detail::make_sublayer<T>(k, dims, true, rng));
    } else {
      blk.in_norm.gain = Tensor<T>({dims.d});
      blk.in_norm.gain.fill(T(1));
      for (size_t j = 0; j < spec.branch_m.size(); ++j)
        blk.bm.push_back(detail::make_sublayer<T>(spec.branch_m[j], dims, j > 0, rng));
      for (size_t j = 0; j < spec.branch_s.size(); ++j)
        blk.bs.push_back(detail::make_sublayer<T>(spec.branch_s[j], dims, j > 0, rng));
      if (spec.agg == Aggregation::Proj) {
        blk.proj_w = Tensor<T>({dims.d, 2 * dims.d});
        detail::fill_normal(blk.proj_w, rng, 0.02);
      } else if (spec.agg == Aggregation::MergeAttn) {
        blk.merge = make_attn<T>(dims.d, dims.heads, 0);
        detail::fill_normal(blk.merge.wq, rng, 0.02);
        detail::fill_normal(blk.merge.wk, rng, 0.02);
        detail::fill_normal(blk.merge.wv, rng, 0.02);
        detail::fill_normal(blk.merge.wo, rng, 0.02);
      }
    }
    m.blocks.push_back(std::move(blk));
  }

  m.final_norm.gain = Tensor<T>({dims.d});
  m.final_norm.gain.fill(T(1));
  m.unembed = Tensor<T>({dims.vocab, dims.d});
  detail::fill_normal(m.unembed, rng, 0.02);
  return m;
}

template <typename T>
Model<T> build_model(const std::string& spec_text, ModelDims dims, uint64_t seed) {
  return build_model<T>(parse_block_spec(spec_text), dims, seed);
}

// Same structure, every tensor zeroed; accumulation target for backward.
template <typename T>
Model<T> grad_shell(const Model<T>& m) {
  Model<T> g = m;
  g.for_each_param([](const std::string&, Tensor<T>& t) { t.zero(); });
  return g;
}

// ---------------------------------------------------------------------------
// Forward

enum class TapSite { BranchM, BranchS, BlockOut };

struct TapRequest {
  int block = 0;
  TapSite site = TapSite::BlockOut;
};

template <typename T>
struct TapValue {
  int block = 0;
  TapSite site = TapSite::BlockOut;
  Tensor<T> value;  // [B,T,d]
};

// Structural edits for ablation. A removed block is skipped entirely; a
// removed sub-layer acts as the identity at its site. Sub-layers are indexed
// in forward order; parallel blocks count the M branch first, then S.
struct ForwardOptions {
  std::vector<int> removed_blocks;
  std::vector<std::pair<int, int>> removed_sublayers;
  std::vector<TapRequest> taps;
};

template <typename T>
struct SubCache {
  NormCache<T> norm;
  SsmCache<T> ssm;
  AttnCache<T> attn;
  FfCache<T> ff;
};

template <typename T>
struct BlockCache {
  std::vector<SubCache<T>> seq;
  NormCache<T> in_norm;
  std::vector<SubCache<T>> bm, bs;
  Tensor<T> m_out, s_out;  // branch outputs feeding the aggregator
  AttnCache<T> merge;
};

template <typename T>
struct ModelCache {
  Tensor<int32_t> tokens;
  std::vector<BlockCache<T>> blocks;
  NormCache<T> final_norm;
  Tensor<T> final_out;  // post final norm, input to unembed
  bool valid = false;
};

namespace detail {

template <typename T>
void sublayer_forward(const SubLayer<T>& sl, const Tensor<T>& in, Tensor<T>& out,
                      SubCache<T>* sc) {
  switch (sl.kind) {
    case LayerKind::Mamba: ssm_forward(sl.ssm, in, out, sc ? &sc->ssm : nullptr); break;
    case LayerKind::Swa: swa_forward(sl.attn, in, out, sc ? &sc->attn : nullptr); break;
    case LayerKind::Ff: ff_forward(sl.ff, in, out, sc ? &sc->ff : nullptr); break;
  }
}

template <typename T>
void sublayer_backward(const SubLayer<T>& sl, SubCache<T>& sc, const Tensor<T>& gy,
                       SubLayer<T>& gsl, Tensor<T>& gin) {
  switch (sl.kind) {
    case LayerKind::Mamba: ssm_backward(sl.ssm, sc.ssm, gy, gsl.ssm, gin); break;
    case LayerKind::Swa: attn_backward(sl.attn, sc.attn, gy, gsl.attn, gin, gin); break;
    case LayerKind::Ff: ff_backward(sl.ff, sc.ff, gy, gsl.ff, gin); break;
  }
}

inline bool has_pair(const std::vector<std::pair<int, int>>& v, int a, int b) {
  for (const auto& p : v)
    if (p.first == a && p.second == b) return true;
  return false;
}

inline bool has_int(const std::vector<int>& v, int a) {
  for (int x : v)
    if (x == a) return true;
  return false;
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  for (int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

// Runs the model over a [B,T] token batch and returns [B,T,V] logits.
// `taps` receives one entry per requested tap, in request order. `cache`
// enables model_backward and is only legal without structural edits.
template <typename T>
Tensor<T> model_forward(const Model<T>& m, const Tensor<int32_t>& tokens,
                        const ForwardOptions& opt = {},
                        std::type_identity_t<std::vector<TapValue<T>>*> taps = nullptr,
                        std::type_identity_t<ModelCache<T>*> cache = nullptr) {
  using detail::has_int;
  using detail::has_pair;
  if (tokens.rank() != 2) throw std::invalid_argument("model_forward: tokens must be [B,T]");
  if (cache && (!opt.removed_blocks.empty() || !opt.removed_sublayers.empty()))
    throw std::invalid_argument("model_forward: cannot record a cache with structural edits");
  const int64_t B = tokens.dim(0), Tn = tokens.dim(1);
  const int64_t V = m.dims.vocab, d = m.dims.d;
  const int nblocks = static_cast<int>(m.blocks.size());

  for (int64_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= V)
      throw std::invalid_argument("model_forward: token id out of range at " +
                                  index_string(tokens.shape, i));
  }
  for (int b : opt.removed_blocks)
    if (b < 0 || b >= nblocks)
      throw std::invalid_argument("model_forward: removed block index out of range");
  for (const auto& [b, j] : opt.removed_sublayers) {
    if (b < 0 || b >= nblocks)
      throw std::invalid_argument("model_forward: removed sub-layer block out of range");
    const int count = static_cast<int>(m.spec.sublayers().size());
    if (j < 0 || j >= count)
      throw std::invalid_argument("model_forward: removed sub-layer index out of range");
  }
  for (const TapRequest& tr : opt.taps) {
    if (tr.block < 0 || tr.block >= nblocks)
      throw std::invalid_argument("tap: block index out of range");
    if (has_int(opt.removed_blocks, tr.block))
      throw std::invalid_argument("tap: block " + std::to_string(tr.block) + " is removed");
    if (tr.site == TapSite::BranchM && !m.spec.has_kind(LayerKind::Mamba))
      throw std::invalid_argument("tap: architecture '" + render_block_spec(m.spec) +
                                  "' has no M-bearing site");
    if (tr.site == TapSite::BranchS && !m.spec.has_kind(LayerKind::Swa))
      throw std::invalid_argument("tap: architecture '" + render_block_spec(m.spec) +
                                  "' has no S-bearing site");
  }

  if (cache) {
    cache->tokens = tokens;
    cache->blocks.assign(static_cast<size_t>(nblocks), BlockCache<T>{});
  }

  // token embedding
  Tensor<T> x({B, Tn, d});
  for (int64_t r = 0; r < B * Tn; ++r) {
    const T* src = m.embed.data() + static_cast<int64_t>(tokens[r]) * d;
    T* dst = x.data() + r * d;
    for (int64_t i = 0; i < d; ++i) dst[i] = src[i];
  }

  std::vector<TapValue<T>> found;
  auto record_tap = [&](int block, TapSite site, const Tensor<T>& value) {
    if (!taps) return;
    for (const TapRequest& tr : opt.taps) {
      if (tr.block == block && tr.site == site) {
        found.push_back({block, site, value});
        return;
      }
    }
  };

  for (int bi = 0; bi < nblocks; ++bi) {
    if (has_int(opt.removed_blocks, bi)) continue;
    const Block<T>& blk = m.blocks[bi];
    BlockCache<T>* bc = cache ? &cache->blocks[static_cast<size_t>(bi)] : nullptr;

    if (!m.spec.parallel) {
      if (bc) bc->seq.resize(blk.seq.size());
      bool tapped_m = false, tapped_s = false;
      for (size_t j = 0; j < blk.seq.size(); ++j) {
        const SubLayer<T>& sl = blk.seq[j];
        const bool removed = has_pair(opt.removed_sublayers, bi, static_cast<int>(j));
        const bool want_m = sl.kind == LayerKind::Mamba && !tapped_m;
        const bool want_s = sl.kind == LayerKind::Swa && !tapped_s;
        if (removed) {
          if ((want_m || want_s) && taps) {
            for (const TapRequest& tr : opt.taps)
              if (tr.block == bi &&
                  ((want_m && tr.site == TapSite::BranchM) ||
                   (want_s && tr.site == TapSite::BranchS)))
                throw std::invalid_argument("tap: requested site is removed");
          }
          if (sl.kind == LayerKind::Mamba) tapped_m = tapped_m || want_m;
          if (sl.kind == LayerKind::Swa) tapped_s = tapped_s || want_s;
          continue;
        }
        SubCache<T>* sc = bc ? &bc->seq[j] : nullptr;
        Tensor<T> normed;
        rmsnorm_forward(sl.norm, x, normed, sc ? &sc->norm : nullptr);
        Tensor<T> out;
        detail::sublayer_forward(sl, normed, out, sc);
        if (want_m) {
          record_tap(bi, TapSite::BranchM, out);
          tapped_m = true;
        }
        if (want_s) {
          record_tap(bi, TapSite::BranchS, out);
          tapped_s = true;
        }
        detail::add_inplace(x, out);
      }
      record_tap(bi, TapSite::BlockOut, x);
    } else {
      Tensor<T> v;
      rmsnorm_forward(blk.in_norm, x, v, bc ? &bc->in_norm : nullptr);

      auto run_branch = [&](const std::vector<SubLayer<T>>& branch, std::vector<SubCache<T>>* bcs,
                            int base_idx) -> Tensor<T> {
        if (bcs) bcs->resize(branch.size());
        Tensor<T> a;
        for (size_t j = 0; j < branch.size(); ++j) {
          const bool removed = has_pair(opt.removed_sublayers, bi, base_idx + static_cast<int>(j));
          SubCache<T>* sc = bcs ? &(*bcs)[j] : nullptr;
          if (j == 0) {
            if (removed) {
              a = v;
            } else {
              detail::sublayer_forward(branch[j], v, a, sc);
            }
          } else {
            if (removed) continue;
            Tensor<T> normed;
            rmsnorm_forward(branch[j].norm, a, normed, sc ? &sc->norm : nullptr);
            Tensor<T> out;
            detail::sublayer_forward(branch[j], normed, out, sc);
            detail::add_inplace(a, out);
          }
        }
        return a;
      };

      Tensor<T> mo = run_branch(blk.bm, bc ? &bc->bm : nullptr, 0);
      Tensor<T> so = run_branch(blk.bs, bc ? &bc->bs : nullptr, static_cast<int>(blk.bm.size()));
      record_tap(bi, TapSite::BranchM, mo);
      record_tap(bi, TapSite::BranchS, so);

      Tensor<T> g({B, Tn, d});
      switch (blk.agg) {
        case Aggregation::Avg:
          for (int64_t i = 0; i < g.size(); ++i) g[i] = T(0.5) * mo[i] + T(0.5) * so[i];
          break;
        case Aggregation::Proj: {
          Tensor<T> cat({B * Tn, 2 * d});
          for (int64_t r = 0; r < B * Tn; ++r) {
            for (int64_t i = 0; i < d; ++i) {
              cat[r * 2 * d + i] = mo[r * d + i];
              cat[r * 2 * d + d + i] = so[r * d + i];
            }
          }
          linear_forward(blk.proj_w, cat.data(), B * Tn, g.data());
          break;
        }
        case Aggregation::MergeAttn:
          attn_forward(blk.merge, so, mo, g, bc ? &bc->merge : nullptr);
          break;
      }
      if (bc) {
        bc->m_out = std::move(mo);
        bc->s_out = std::move(so);
      }
      detail::add_inplace(x, g);
      record_tap(bi, TapSite::BlockOut, x);
    }
  }

  Tensor<T> normed;
  rmsnorm_forward(m.final_norm, x, normed, cache ? &cache->final_norm : nullptr);
  Tensor<T> logits({B, Tn, V});
  linear_forward(m.unembed, normed.data(), B * Tn, logits.data());
  if (cache) {
    cache->final_out = std::move(normed);
    cache->valid = true;
  }

  if (taps) {
    taps->clear();
    for (const TapRequest& tr : opt.taps) {
      for (const TapValue<T>& tv : found) {
        if (tv.block == tr.block && tv.site == tr.site) {
          taps->push_back(tv);
          break;
        }
      }
    }
    if (taps->size() != opt.taps.size())
      throw std::logic_error("model_forward: unresolved tap request");
  }
  return logits;
}

// Accumulates parameter gradients for a cached forward pass into `grads`
// (a grad_shell of the same model).
template <typename T>
void model_backward(const Model<T>& m, ModelCache<T>& cache, const Tensor<T>& dlogits,
                    Model<T>& grads) {
  if (!cache.valid) throw std::logic_error("model: backward without forward");
  cache.valid = false;
  const int64_t B = cache.tokens.dim(0), Tn = cache.tokens.dim(1), d = m.dims.d;
  const int64_t rows = B * Tn;

  // unembed and final norm
  Tensor<T> d_normed({B, Tn, d});
  linear_backward(m.unembed, cache.final_out.data(), dlogits.data(), rows, &grads.unembed,
                  d_normed.data());
  Tensor<T> dx;
  rmsnorm_backward(m.final_norm, cache.final_norm, d_normed, grads.final_norm, dx);

  for (int bi = static_cast<int>(m.blocks.size()) - 1; bi >= 0; --bi) {
    const Block<T>& blk = m.blocks[bi];
    Block<T>& gblk = grads.blocks[static_cast<size_t>(bi)];
    BlockCache<T>& bc = cache.blocks[static_cast<size_t>(bi)];

    if (!m.spec.parallel) {
      for (size_t j = blk.seq.size(); j-- > 0;) {
        const SubLayer<T>& sl = blk.seq[j];
        // x_out = x_in + L(norm(x_in)); dx feeds both the skip and the layer
        Tensor<T> d_normed_in;
        detail::sublayer_backward(sl, bc.seq[j], dx, gblk.seq[j], d_normed_in);
        Tensor<T> d_in;
        rmsnorm_backward(sl.norm, bc.seq[j].norm, d_normed_in, gblk.seq[j].norm, d_in);
        detail::add_inplace(dx, d_in);
      }
    } else {
      // y = u + agg(m_out, s_out)
      Tensor<T> dm, ds;
      switch (blk.agg) {
        case Aggregation::Avg: {
          dm = Tensor<T>({B, Tn, d});
          ds = Tensor<T>({B, Tn, d});
          for (int64_t i = 0; i < dx.size(); ++i) {
            dm[i] = T(0.5) * dx[i];
            ds[i] = T(0.5) * dx[i];
          }
          break;
        }
        case Aggregation::Proj: {
          Tensor<T> cat({rows, 2 * d});
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t i = 0; i < d; ++i) {
              cat[r * 2 * d + i] = bc.m_out[r * d + i];
              cat[r * 2 * d + d + i] = bc.s_out[r * d + i];
            }
          }
          Tensor<T> dcat({rows, 2 * d});
          linear_backward(blk.proj_w, cat.data(), dx.data(), rows, &gblk.proj_w, dcat.data());
          dm = Tensor<T>({B, Tn, d});
          ds = Tensor<T>({B, Tn, d});
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t i = 0; i < d; ++i) {
              dm[r * d + i] = dcat[r * 2 * d + i];
              ds[r * d + i] = dcat[r * 2 * d + d + i];
            }
          }
          break;
        }
        case Aggregation::MergeAttn:
          attn_backward(blk.merge, bc.merge, dx, gblk.merge, ds, dm);
          break;
      }

      Tensor<T> dv({B, Tn, d});
      auto branch_backward = [&](const std::vector<SubLayer<T>>& branch,
                                 std::vector<SubCache<T>>& bcs, std::vector<SubLayer<T>>& gbranch,
                                 Tensor<T>& da) {
        for (size_t j = branch.size(); j-- > 1;) {
          Tensor<T> d_normed_in;
          detail::sublayer_backward(branch[j], bcs[j], da, gbranch[j], d_normed_in);
          Tensor<T> d_in;
          rmsnorm_backward(branch[j].norm, bcs[j].norm, d_normed_in, gbranch[j].norm, d_in);
          detail::add_inplace(da, d_in);
        }
        Tensor<T> dv_part;
        detail::sublayer_backward(branch[0], bcs[0], da, gbranch[0], dv_part);
        detail::add_inplace(dv, dv_part);
      };
      branch_backward(blk.bm, bc.bm, gblk.bm, dm);
      branch_backward(blk.bs, bc.bs, gblk.bs, ds);

      Tensor<T> d_in;
      rmsnorm_backward(blk.in_norm, bc.in_norm, dv, gblk.in_norm, d_in);
      detail::add_inplace(dx, d_in);
    }
  }

  // embedding scatter
  for (int64_t r = 0; r < rows; ++r) {
    T* dst = grads.embed.data() + static_cast<int64_t>(cache.tokens[r]) * d;
    const T* src = dx.data() + r * d;
    for (int64_t i = 0; i < d; ++i) dst[i] += src[i];
  }
}

}  // namespace hyb
