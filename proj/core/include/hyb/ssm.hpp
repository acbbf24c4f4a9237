#pragma once

#include <cmath>
#include <stdexcept>

#include "hyb/tensor.hpp"

namespace hyb {

template <typename T>
T softplus(T x) {
  return x > T(30) ? x : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// Diagonal selective state-space layer over d channels with n states each.
//
// Per step t and channel c:
//   h_t = Abar_t (*) h_{t-1} + Bbar_t * x_t[c]      (n-vector per channel)
//   y_t[c] = C_t . h_t
//
// Selective mode derives the step size and the B/C vectors from the input:
//   delta_t = softplus(dt_w . x_t)
//   Abar_t[c,i] = exp(-delta_t * exp(a_log[c,i]))
//   B_t = b_w x_t,  C_t = c_w x_t,  Bbar_t = delta_t * B_t
//
// LTI mode freezes the recurrence to constants (delta = softplus(dt[0]),
// Bbar = b_const, C = c_const), which makes the layer the exact linear
// recurrence h_t = A h_{t-1} + B x_t, y_t = C h_t. Tests drive it directly.
template <typename T>
struct SsmParams {
  int64_t d = 0;
  int64_t n = 0;
  bool lti = false;

  Tensor<T> a_log;  // [d, n]

  // selective mode
  Tensor<T> b_w;   // [n, d]
  Tensor<T> c_w;   // [n, d]
  Tensor<T> dt_w;  // [d]

  // lti mode
  Tensor<T> b_const;  // [n]
  Tensor<T> c_const;  // [n]
  Tensor<T> dt;       // [1], raw value fed through softplus

  void zero() {
    for (Tensor<T>* t : {&a_log, &b_w, &c_w, &dt_w, &b_const, &c_const, &dt}) t->zero();
  }
  SsmParams grad_shell() const {
    SsmParams g = *this;
    g.zero();
    return g;
  }
};

template <typename T>
SsmParams<T> make_ssm_selective(int64_t d, int64_t n) {
  SsmParams<T> p;
  p.d = d;
  p.n = n;
  p.lti = false;
  p.a_log = Tensor<T>({d, n});
  p.b_w = Tensor<T>({n, d});
  p.c_w = Tensor<T>({n, d});
  p.dt_w = Tensor<T>({d});
  return p;
}

template <typename T>
SsmParams<T> make_ssm_lti(int64_t d, int64_t n) {
  SsmParams<T> p;
  p.d = d;
  p.n = n;
  p.lti = true;
  p.a_log = Tensor<T>({d, n});
  p.b_const = Tensor<T>({n});
  p.c_const = Tensor<T>({n});
  p.dt = Tensor<T>({1});
  return p;
}

template <typename T>
struct SsmCache {
  Tensor<T> x;       // [B,T,d]
  Tensor<T> h;       // [B,T,d,n]
  Tensor<T> abar;    // [B,T,d,n] (selective only; lti recomputes from params)
  Tensor<T> bbar;    // [B,T,n]
  Tensor<T> bt;      // [B,T,n] pre-scale B (selective only)
  Tensor<T> ct;      // [B,T,n] (selective only)
  Tensor<T> dt_raw;  // [B,T] (selective only)
  Tensor<T> delta;   // [B,T]
  bool valid = false;
};

template <typename T>
void ssm_forward(const SsmParams<T>& p, const Tensor<T>& x, Tensor<T>& y,
                 SsmCache<T>* cache = nullptr) {
  if (x.rank() != 3 || x.dim(2) != p.d) throw std::invalid_argument("ssm: input must be [B,T,d]");
  check_finite(x, "ssm_scan", "input");
  const int64_t B = x.dim(0), Tn = x.dim(1), d = p.d, n = p.n;

  Tensor<T> ea({d, n});
  for (int64_t i = 0; i < ea.size(); ++i) ea[i] = std::exp(p.a_log[i]);

  y = Tensor<T>({B, Tn, d});
  if (cache) {
    cache->x = x;
    cache->h = Tensor<T>({B, Tn, d, n});
    cache->abar = p.lti ? Tensor<T>() : Tensor<T>({B, Tn, d, n});
    cache->bbar = Tensor<T>({B, Tn, n});
    cache->bt = p.lti ? Tensor<T>() : Tensor<T>({B, Tn, n});
    cache->ct = p.lti ? Tensor<T>() : Tensor<T>({B, Tn, n});
    cache->dt_raw = p.lti ? Tensor<T>() : Tensor<T>({B, Tn});
    cache->delta = Tensor<T>({B, Tn});
  }

  // LTI transition is step-invariant; build it once.
  Tensor<T> abar_const;
  if (p.lti) {
    const T delta = softplus(p.dt[0]);
    abar_const = Tensor<T>({d, n});
    for (int64_t i = 0; i < abar_const.size(); ++i) abar_const[i] = std::exp(-delta * ea[i]);
  }

  std::vector<T> h(static_cast<size_t>(d * n));
  std::vector<T> bt(static_cast<size_t>(n)), ct(static_cast<size_t>(n));
  for (int64_t b = 0; b < B; ++b) {
    std::fill(h.begin(), h.end(), T(0));
    for (int64_t t = 0; t < Tn; ++t) {
      const T* xt = x.data() + (b * Tn + t) * d;
      T delta;
      T s = T(0);
      if (p.lti) {
        delta = softplus(p.dt[0]);
        for (int64_t i = 0; i < n; ++i) bt[i] = p.b_const[i];  // Bbar, no delta scale
        for (int64_t i = 0; i < n; ++i) ct[i] = p.c_const[i];
      } else {
        for (int64_t c = 0; c < d; ++c) s += p.dt_w[c] * xt[c];
        delta = softplus(s);
        for (int64_t i = 0; i < n; ++i) {
          const T* row = p.b_w.data() + i * d;
          T acc = T(0);
          for (int64_t c = 0; c < d; ++c) acc += row[c] * xt[c];
          bt[i] = acc;
        }
        for (int64_t i = 0; i < n; ++i) {
          const T* row = p.c_w.data() + i * d;
          T acc = T(0);
          for (int64_t c = 0; c < d; ++c) acc += row[c] * xt[c];
          ct[i] = acc;
        }
      }

      T* yt = y.data() + (b * Tn + t) * d;
      for (int64_t c = 0; c < d; ++c) {
        T* hc = h.data() + c * n;
        T acc = T(0);
        for (int64_t i = 0; i < n; ++i) {
          T abar, bbar;
          if (p.lti) {
            abar = abar_const[c * n + i];
            bbar = bt[i];
          } else {
            abar = std::exp(-delta * ea[c * n + i]);
            bbar = delta * bt[i];
          }
          hc[i] = abar * hc[i] + bbar * xt[c];
          acc += ct[i] * hc[i];
          if (cache && !p.lti) cache->abar[((b * Tn + t) * d + c) * n + i] = abar;
        }
        yt[c] = acc;
        if (cache) {
          T* dst = cache->h.data() + ((b * Tn + t) * d + c) * n;
          for (int64_t i = 0; i < n; ++i) dst[i] = hc[i];
        }
      }

      if (cache) {
        cache->delta[b * Tn + t] = delta;
        for (int64_t i = 0; i < n; ++i)
          cache->bbar[(b * Tn + t) * n + i] = p.lti ? bt[i] : delta * bt[i];
        if (!p.lti) {
          cache->dt_raw[b * Tn + t] = s;
          for (int64_t i = 0; i < n; ++i) cache->bt[(b * Tn + t) * n + i] = bt[i];
          for (int64_t i = 0; i < n; ++i) cache->ct[(b * Tn + t) * n + i] = ct[i];
        }
      }
    }
  }
  if (cache) cache->valid = true;
}

template <typename T>
void ssm_backward(const SsmParams<T>& p, SsmCache<T>& cache, const Tensor<T>& gy,
                  SsmParams<T>& grad, Tensor<T>& gx) {
  if (!cache.valid) throw std::logic_error("ssm_scan: backward without forward");
  cache.valid = false;
  const int64_t B = cache.x.dim(0), Tn = cache.x.dim(1), d = p.d, n = p.n;

  Tensor<T> ea({d, n});
  for (int64_t i = 0; i < ea.size(); ++i) ea[i] = std::exp(p.a_log[i]);
  Tensor<T> abar_const;
  if (p.lti) {
    const T delta = softplus(p.dt[0]);
    abar_const = Tensor<T>({d, n});
    for (int64_t i = 0; i < abar_const.size(); ++i) abar_const[i] = std::exp(-delta * ea[i]);
  }

  gx = Tensor<T>({B, Tn, d});
  T ddt_raw_total = T(0);  // lti only

  std::vector<T> dh(static_cast<size_t>(d * n));
  std::vector<T> dbbar(static_cast<size_t>(n)), dc(static_cast<size_t>(n));
  for (int64_t b = 0; b < B; ++b) {
    std::fill(dh.begin(), dh.end(), T(0));
    for (int64_t t = Tn - 1; t >= 0; --t) {
      const int64_t bt_off = b * Tn + t;
      const T* xt = cache.x.data() + bt_off * d;
      const T* gyt = gy.data() + bt_off * d;
      const T* ht = cache.h.data() + bt_off * d * n;
      const T* hprev = t > 0 ? cache.h.data() + (bt_off - 1) * d * n : nullptr;
      const T delta = cache.delta[bt_off];
      T* dxt = gx.data() + bt_off * d;

      std::fill(dbbar.begin(), dbbar.end(), T(0));
      std::fill(dc.begin(), dc.end(), T(0));
      T ddelta = T(0);

      const T* ct = p.lti ? p.c_const.data() : cache.ct.data() + bt_off * n;
      const T* bbar = cache.bbar.data() + bt_off * n;

      for (int64_t c = 0; c < d; ++c) {
        T* dhc = dh.data() + c * n;
        const T* htc = ht + c * n;
        const T g = gyt[c];
        T dx_acc = T(0);
        for (int64_t i = 0; i < n; ++i) {
          dc[i] += g * htc[i];
          T dhv = dhc[i] + g * ct[i];
          const T hp = hprev ? hprev[c * n + i] : T(0);
          const T abar = p.lti ? abar_const[c * n + i] : cache.abar[bt_off * d * n + c * n + i];
          const T dabar = dhv * hp;
          // Abar = exp(-delta * ea): both a_log and delta feed it.
          grad.a_log[c * n + i] += dabar * abar * (-delta) * ea[c * n + i];
          ddelta += dabar * abar * (-ea[c * n + i]);
          dbbar[i] += dhv * xt[c];
          dx_acc += dhv * bbar[i];
          dhc[i] = dhv * abar;  // becomes dh_{t-1}
        }
        dxt[c] += dx_acc;
      }

      if (p.lti) {
        for (int64_t i = 0; i < n; ++i) {
          grad.b_const[i] += dbbar[i];
          grad.c_const[i] += dc[i];
        }
        ddt_raw_total += ddelta * sigmoid(p.dt[0]);
      } else {
        // Bbar = delta * B
        const T* btv = cache.bt.data() + bt_off * n;
        for (int64_t i = 0; i < n; ++i) ddelta += dbbar[i] * btv[i];
        const T ds = ddelta * sigmoid(cache.dt_raw[bt_off]);
        for (int64_t c = 0; c < d; ++c) {
          grad.dt_w[c] += ds * xt[c];
          dxt[c] += ds * p.dt_w[c];
        }
        for (int64_t i = 0; i < n; ++i) {
          const T dB = delta * dbbar[i];
          T* db_row = grad.b_w.data() + i * d;
          T* dc_row = grad.c_w.data() + i * d;
          const T* b_row = p.b_w.data() + i * d;
          const T* c_row = p.c_w.data() + i * d;
          for (int64_t c = 0; c < d; ++c) {
            db_row[c] += dB * xt[c];
            dc_row[c] += dc[i] * xt[c];
            dxt[c] += dB * b_row[c] + dc[i] * c_row[c];
          }
        }
      }
    }
  }
  if (p.lti) grad.dt[0] += ddt_raw_total;
}

// Materializes the attention matrix the recurrence implies for one channel:
//   alpha[t,s] = C_t . (prod_{k=s+1..t} Abar_k) (*) Bbar_s        (s <= t)
// so that y_t[c] = sum_{s<=t} alpha[t,s] x_s[c]. Lower triangular; the upper
// part is zero. Analysis-only: cost is O(T^2 n), capped to keep it desk-sized.
inline constexpr int64_t kHiddenAttnMaxT = 4096;

template <typename T>
Tensor<T> ssm_hidden_attention(const SsmParams<T>& p, const Tensor<T>& x, int64_t channel) {
  if (x.rank() != 2 || x.dim(1) != p.d)
    throw std::invalid_argument("ssm_hidden_attention: input must be [T,d]");
  if (channel < 0 || channel >= p.d)
    throw std::invalid_argument("ssm_hidden_attention: channel out of range");
  const int64_t Tn = x.dim(0);
  if (Tn > kHiddenAttnMaxT)
    throw std::invalid_argument("ssm_hidden_attention: sequence too long to materialize");
  check_finite(x, "ssm_hidden_attention", "input");
  const int64_t d = p.d, n = p.n;

  Tensor<T> ea({n});
  for (int64_t i = 0; i < n; ++i) ea[i] = std::exp(p.a_log[channel * n + i]);

  // Per-step coefficients for the chosen channel.
  Tensor<T> abar({Tn, n}), bbar({Tn, n}), ct({Tn, n});
  for (int64_t t = 0; t < Tn; ++t) {
    const T* xt = x.data() + t * d;
    if (p.lti) {
      const T delta = softplus(p.dt[0]);
      for (int64_t i = 0; i < n; ++i) {
        abar[t * n + i] = std::exp(-delta * ea[i]);
        bbar[t * n + i] = p.b_const[i];
        ct[t * n + i] = p.c_const[i];
      }
    } else {
      T s = T(0);
      for (int64_t c = 0; c < d; ++c) s += p.dt_w[c] * xt[c];
      const T delta = softplus(s);
      for (int64_t i = 0; i < n; ++i) {
        const T* brow = p.b_w.data() + i * d;
        const T* crow = p.c_w.data() + i * d;
        T bv = T(0), cv = T(0);
        for (int64_t c = 0; c < d; ++c) {
          bv += brow[c] * xt[c];
          cv += crow[c] * xt[c];
        }
        abar[t * n + i] = std::exp(-delta * ea[i]);
        bbar[t * n + i] = delta * bv;
        ct[t * n + i] = cv;
      }
    }
  }

  Tensor<T> alpha({Tn, Tn});
  std::vector<T> prod(static_cast<size_t>(n));
  for (int64_t t = 0; t < Tn; ++t) {
    std::fill(prod.begin(), prod.end(), T(1));
    for (int64_t s = t; s >= 0; --s) {
      if (s < t)
        for (int64_t i = 0; i < n; ++i) prod[static_cast<size_t>(i)] *= abar[(s + 1) * n + i];
      T acc = T(0);
      for (int64_t i = 0; i < n; ++i)
        acc += ct[t * n + i] * prod[static_cast<size_t>(i)] * bbar[s * n + i];
      alpha[t * Tn + s] = acc;
    }
  }
  return alpha;
}

}  // namespace hyb
