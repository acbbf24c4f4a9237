#pragma once

#include <cmath>
#include <stdexcept>

#include "hyb/linalg.hpp"
#include "hyb/tensor.hpp"

namespace hyb {

// Position-wise feed-forward: y = W2 gelu(W1 x), 4x expansion, no biases.
template <typename T>
struct FfParams {
  Tensor<T> w1;  // [hidden, d]
  Tensor<T> w2;  // [d, hidden]
};

template <typename T>
struct FfCache {
  Tensor<T> x;
  Tensor<T> pre;  // W1 x
  Tensor<T> act;  // gelu(pre)
  bool valid = false;
};

// Exact (erf) form, matching its derivative below.
template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);  // 1/sqrt(2*pi)
  return cdf + x * pdf;
}

template <typename T>
void ff_forward(const FfParams<T>& p, const Tensor<T>& x, Tensor<T>& y,
                FfCache<T>* cache = nullptr) {
  const int64_t d = p.w1.dim(1), hidden = p.w1.dim(0);
  if (x.shape.back() != d) throw std::invalid_argument("ff: last axis does not match w1");
  check_finite(x, "ff", "input");
  const int64_t rows = x.size() / d;

  Tensor<T> pre({rows, hidden});
  linear_forward(p.w1, x.data(), rows, pre.data());
  Tensor<T> act({rows, hidden});
  for (int64_t i = 0; i < pre.size(); ++i) act[i] = gelu(pre[i]);
  y = Tensor<T>(x.shape);
  linear_forward(p.w2, act.data(), rows, y.data());

  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
    cache->valid = true;
  }
}

template <typename T>
void ff_backward(const FfParams<T>& p, FfCache<T>& cache, const Tensor<T>& gy,
                 FfParams<T>& grad, Tensor<T>& gx) {
  if (!cache.valid) throw std::logic_error("ff: backward without forward");
  cache.valid = false;
  const int64_t d = p.w1.dim(1), hidden = p.w1.dim(0);
  const int64_t rows = cache.x.size() / d;

  Tensor<T> dact({rows, hidden});
  linear_backward(p.w2, cache.act.data(), gy.data(), rows, &grad.w2, dact.data());
  for (int64_t i = 0; i < dact.size(); ++i) dact[i] *= gelu_grad(cache.pre[i]);
  gx = Tensor<T>(cache.x.shape);
  linear_backward(p.w1, cache.x.data(), dact.data(), rows, &grad.w1, gx.data());
}

}  // namespace hyb
