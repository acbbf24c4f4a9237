#pragma once

#include <cmath>
#include <stdexcept>

#include "hyb/tensor.hpp"

namespace hyb {

inline constexpr double kNormEps = 1e-6;

template <typename T>
struct NormParams {
  Tensor<T> gain;  // [d]
};

template <typename T>
struct NormCache {
  Tensor<T> x;
  Tensor<T> inv_rms;  // one per row
  bool valid = false;
};

// RMS normalization over the last axis:
//   y_i = gain_i * x_i / sqrt(mean_i(x_i^2) + eps)
template <typename T>
void rmsnorm_forward(const NormParams<T>& p, const Tensor<T>& x, Tensor<T>& y,
                     NormCache<T>* cache = nullptr) {
  const int64_t d = p.gain.dim(0);
  if (x.rank() < 1 || x.shape.back() != d)
    throw std::invalid_argument("rmsnorm: last axis does not match gain");
  check_finite(x, "rmsnorm", "input");
  const int64_t rows = x.size() / d;
  y = Tensor<T>(x.shape);
  if (cache) {
    cache->x = x;
    cache->inv_rms = Tensor<T>({rows});
  }
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * d;
    T* yr = y.data() + r * d;
    T ss = T(0);
    for (int64_t i = 0; i < d; ++i) ss += xr[i] * xr[i];
    const T inv = T(1) / std::sqrt(ss / T(d) + T(kNormEps));
    for (int64_t i = 0; i < d; ++i) yr[i] = p.gain[i] * xr[i] * inv;
    if (cache) cache->inv_rms[r] = inv;
  }
  if (cache) cache->valid = true;
}

template <typename T>
void rmsnorm_backward(const NormParams<T>& p, NormCache<T>& cache, const Tensor<T>& gy,
                      NormParams<T>& grad, Tensor<T>& gx) {
  if (!cache.valid) throw std::logic_error("rmsnorm: backward without forward");
  cache.valid = false;
  const int64_t d = p.gain.dim(0);
  const int64_t rows = cache.x.size() / d;
  gx = Tensor<T>(cache.x.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = cache.x.data() + r * d;
    const T* gr = gy.data() + r * d;
    T* dxr = gx.data() + r * d;
    const T inv = cache.inv_rms[r];
    // y_i = g_i x_i r with r = 1/rms; dr/dx_j = -r^3 x_j / d
    T dot = T(0);
    for (int64_t i = 0; i < d; ++i) {
      grad.gain[i] += gr[i] * xr[i] * inv;
      dot += gr[i] * p.gain[i] * xr[i];
    }
    const T k = dot * inv * inv * inv / T(d);
    for (int64_t j = 0; j < d; ++j) dxr[j] = gr[j] * p.gain[j] * inv - k * xr[j];
  }
}

}  // namespace hyb
