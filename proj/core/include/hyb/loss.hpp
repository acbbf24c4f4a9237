#pragma once

#include <cmath>
#include <stdexcept>

#include "hyb/tensor.hpp"

namespace hyb {

inline constexpr int32_t kIgnoreTarget = -1;

// Mean next-token negative log-likelihood over positions whose target is not
// kIgnoreTarget. Accumulates in double regardless of T. When `dlogits` is
// given it receives (softmax - onehot) / count at scored positions and zeros
// elsewhere. Non-finite logits propagate into the return value rather than
// throwing, so callers can detect divergence from the loss itself.
template <typename T>
double cross_entropy(const Tensor<T>& logits, const Tensor<int32_t>& targets,
                     Tensor<T>* dlogits = nullptr) {
  if (logits.rank() != 3) throw std::invalid_argument("cross_entropy: logits must be [B,T,V]");
  const int64_t rows = logits.dim(0) * logits.dim(1), V = logits.dim(2);
  if (targets.size() != rows) throw std::invalid_argument("cross_entropy: target shape mismatch");

  int64_t count = 0;
  for (int64_t r = 0; r < rows; ++r) {
    if (targets[r] == kIgnoreTarget) continue;
    if (targets[r] < 0 || targets[r] >= V)
      throw std::invalid_argument("cross_entropy: target id out of range at " +
                                  index_string(targets.shape, r));
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: no scored positions");

  if (dlogits) {
    *dlogits = Tensor<T>(logits.shape);
  }
  double total = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    if (targets[r] == kIgnoreTarget) continue;
    const T* lr = logits.data() + r * V;
    double m = static_cast<double>(lr[0]);
    for (int64_t i = 1; i < V; ++i) m = std::max(m, static_cast<double>(lr[i]));
    double z = 0.0;
    for (int64_t i = 0; i < V; ++i) z += std::exp(static_cast<double>(lr[i]) - m);
    const double lse = m + std::log(z);
    total += lse - static_cast<double>(lr[targets[r]]);
    if (dlogits) {
      T* dr = dlogits->data() + r * V;
      for (int64_t i = 0; i < V; ++i)
        dr[i] = static_cast<T>(std::exp(static_cast<double>(lr[i]) - lse) /
                               static_cast<double>(count));
      dr[targets[r]] -= static_cast<T>(1.0 / static_cast<double>(count));
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace hyb
