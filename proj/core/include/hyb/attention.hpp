#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hyb/linalg.hpp"
#include "hyb/tensor.hpp"

namespace hyb {

// Multi-head causal attention with an optional sliding window.
//
//   q_t = Wq q_in_t,  k_s = Wk kv_in_s,  v_s = Wv kv_in_s
//   score[t,s] = (q_t . k_s) / sqrt(d_head)   for visible s
//   y_t = Wo concat_heads( sum_s softmax_s(score[t,s]) v_s )
//
// window > 0 restricts each query to s in [max(0, t-window+1), t]; window == 0
// means plain causal (every s <= t), which is what the cross-attention
// aggregator uses. Self-attention passes the same tensor as q_in and kv_in.
template <typename T>
struct AttnParams {
  int64_t d = 0;
  int64_t heads = 0;
  int64_t window = 0;
  Tensor<T> wq, wk, wv, wo;  // each [d, d]

  void zero() {
    for (Tensor<T>* t : {&wq, &wk, &wv, &wo}) t->zero();
  }
  AttnParams grad_shell() const {
    AttnParams g = *this;
    g.zero();
    return g;
  }
};

template <typename T>
AttnParams<T> make_attn(int64_t d, int64_t heads, int64_t window) {
  if (heads <= 0 || d % heads != 0)
    throw std::invalid_argument("attention: heads must divide d");
  if (window < 0) throw std::invalid_argument("attention: window must be >= 0");
  AttnParams<T> p;
  p.d = d;
  p.heads = heads;
  p.window = window;
  p.wq = Tensor<T>({d, d});
  p.wk = Tensor<T>({d, d});
  p.wv = Tensor<T>({d, d});
  p.wo = Tensor<T>({d, d});
  return p;
}

template <typename T>
struct AttnCache {
  Tensor<T> q_in, kv_in;
  Tensor<T> q, k, v;    // [B,T,d]
  Tensor<T> probs;      // [B,H,T,weff], row t holds s in [s0(t), t]
  Tensor<T> att;        // [B,T,d] heads concatenated, input to wo
  bool valid = false;
};

inline int64_t attn_row_start(int64_t t, int64_t window) {
  return window > 0 ? std::max<int64_t>(0, t - window + 1) : 0;
}

template <typename T>
void attn_forward(const AttnParams<T>& p, const Tensor<T>& q_in, const Tensor<T>& kv_in,
                  Tensor<T>& y, AttnCache<T>* cache = nullptr) {
  if (q_in.rank() != 3 || q_in.dim(2) != p.d)
    throw std::invalid_argument("attention: query input must be [B,T,d]");
  if (!q_in.same_shape(kv_in))
    throw std::invalid_argument("attention: query/key-value shapes differ");
  check_finite(q_in, "attention", "query input");
  if (q_in.data() != kv_in.data()) check_finite(kv_in, "attention", "key-value input");

  const int64_t B = q_in.dim(0), Tn = q_in.dim(1), d = p.d, H = p.heads, dh = d / H;
  const int64_t weff = p.window > 0 ? std::min(p.window, Tn) : Tn;
  const T scale = T(1) / std::sqrt(T(dh));
  const int64_t rows = B * Tn;

  Tensor<T> q({B, Tn, d}), k({B, Tn, d}), v({B, Tn, d});
  linear_forward(p.wq, q_in.data(), rows, q.data());
  linear_forward(p.wk, kv_in.data(), rows, k.data());
  linear_forward(p.wv, kv_in.data(), rows, v.data());

  Tensor<T> probs({B, H, Tn, weff});
  Tensor<T> att({B, Tn, d});
  std::vector<T> score(static_cast<size_t>(weff));
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t h = 0; h < H; ++h) {
      for (int64_t t = 0; t < Tn; ++t) {
        const int64_t s0 = attn_row_start(t, p.window);
        const int64_t cnt = t - s0 + 1;
        const T* qt = q.data() + (b * Tn + t) * d + h * dh;
        for (int64_t j = 0; j < cnt; ++j) {
          const T* ks = k.data() + (b * Tn + s0 + j) * d + h * dh;
          T acc = T(0);
          for (int64_t i = 0; i < dh; ++i) acc += qt[i] * ks[i];
          score[static_cast<size_t>(j)] = acc * scale;
        }
        // softmax with per-row max subtraction
        T m = score[0];
        for (int64_t j = 1; j < cnt; ++j) m = std::max(m, score[static_cast<size_t>(j)]);
        T z = T(0);
        for (int64_t j = 0; j < cnt; ++j) {
          score[static_cast<size_t>(j)] = std::exp(score[static_cast<size_t>(j)] - m);
          z += score[static_cast<size_t>(j)];
        }
        T* prow = probs.data() + ((b * H + h) * Tn + t) * weff;
        for (int64_t j = 0; j < cnt; ++j) prow[j] = score[static_cast<size_t>(j)] / z;
        for (int64_t j = cnt; j < weff; ++j) prow[j] = T(0);

        T* out = att.data() + (b * Tn + t) * d + h * dh;
        for (int64_t i = 0; i < dh; ++i) out[i] = T(0);
        for (int64_t j = 0; j < cnt; ++j) {
          const T* vs = v.data() + (b * Tn + s0 + j) * d + h * dh;
          const T pj = prow[j];
          for (int64_t i = 0; i < dh; ++i) out[i] += pj * vs[i];
        }
      }
    }
  }

  y = Tensor<T>({B, Tn, d});
  linear_forward(p.wo, att.data(), rows, y.data());

  if (cache) {
    cache->q_in = q_in;
    cache->kv_in = kv_in;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->att = std::move(att);
    cache->valid = true;
  }
}

// Sliding-window self-attention, the "S" layer.
template <typename T>
void swa_forward(const AttnParams<T>& p, const Tensor<T>& x, Tensor<T>& y,
                 AttnCache<T>* cache = nullptr) {
  if (p.window < 1) throw std::invalid_argument("swa: window must be >= 1");
  attn_forward(p, x, x, y, cache);
}

// Adds input gradients into g_qin / g_kvin. Passing the same tensor object
// for both (the self-attention case) accumulates both contributions.
template <typename T>
void attn_backward(const AttnParams<T>& p, AttnCache<T>& cache, const Tensor<T>& gy,
                   AttnParams<T>& grad, Tensor<T>& g_qin, Tensor<T>& g_kvin) {
  if (!cache.valid) throw std::logic_error("attention: backward without forward");
  cache.valid = false;
  const int64_t B = cache.q_in.dim(0), Tn = cache.q_in.dim(1), d = p.d, H = p.heads, dh = d / H;
  const int64_t weff = p.window > 0 ? std::min(p.window, Tn) : Tn;
  const T scale = T(1) / std::sqrt(T(dh));
  const int64_t rows = B * Tn;

  g_qin = Tensor<T>(cache.q_in.shape);
  if (&g_kvin != &g_qin) g_kvin = Tensor<T>(cache.kv_in.shape);

  Tensor<T> datt({B, Tn, d});
  linear_backward(p.wo, cache.att.data(), gy.data(), rows, &grad.wo, datt.data());

  Tensor<T> dq({B, Tn, d}), dk({B, Tn, d}), dv({B, Tn, d});
  std::vector<T> dp(static_cast<size_t>(weff));
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t h = 0; h < H; ++h) {
      for (int64_t t = 0; t < Tn; ++t) {
        const int64_t s0 = attn_row_start(t, p.window);
        const int64_t cnt = t - s0 + 1;
        const T* prow = cache.probs.data() + ((b * H + h) * Tn + t) * weff;
        const T* dot = datt.data() + (b * Tn + t) * d + h * dh;
        T pdp = T(0);
        for (int64_t j = 0; j < cnt; ++j) {
          const T* vs = cache.v.data() + (b * Tn + s0 + j) * d + h * dh;
          T acc = T(0);
          for (int64_t i = 0; i < dh; ++i) acc += dot[i] * vs[i];
          dp[static_cast<size_t>(j)] = acc;
          pdp += prow[j] * acc;
          T* dvs = dv.data() + (b * Tn + s0 + j) * d + h * dh;
          for (int64_t i = 0; i < dh; ++i) dvs[i] += prow[j] * dot[i];
        }
        const T* qt = cache.q.data() + (b * Tn + t) * d + h * dh;
        T* dqt = dq.data() + (b * Tn + t) * d + h * dh;
        for (int64_t j = 0; j < cnt; ++j) {
          const T dscore = prow[j] * (dp[static_cast<size_t>(j)] - pdp) * scale;
          const T* ks = cache.k.data() + (b * Tn + s0 + j) * d + h * dh;
          T* dks = dk.data() + (b * Tn + s0 + j) * d + h * dh;
          for (int64_t i = 0; i < dh; ++i) {
            dqt[i] += dscore * ks[i];
            dks[i] += dscore * qt[i];
          }
        }
      }
    }
  }

  linear_backward(p.wq, cache.q_in.data(), dq.data(), rows, &grad.wq, g_qin.data());
  linear_backward(p.wk, cache.kv_in.data(), dk.data(), rows, &grad.wk, g_kvin.data());
  linear_backward(p.wv, cache.kv_in.data(), dv.data(), rows, &grad.wv, g_kvin.data());
}

}  // namespace hyb
