#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyb/model.hpp"
#include "hyb/tensor.hpp"

namespace hyb {

struct AdamWConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One AdamW update with decoupled weight decay:
//   m = b1 m + (1-b1) g          mhat = m / (1 - b1^t)
//   v = b2 v + (1-b2) g^2        vhat = v / (1 - b2^t)
//   w -= lr * (mhat / (sqrt(vhat) + eps) + wd * w)
// so a zero gradient still shrinks w by exactly lr*wd*w. `t` is the 1-based
// step count. A non-finite gradient rejects the whole step before any state
// is touched.
template <typename T>
void adamw_step(T* w, const T* g, T* m, T* v, int64_t count, int64_t t, double lr,
                const AdamWConfig& cfg) {
  for (int64_t i = 0; i < count; ++i) {
    if (!std::isfinite(static_cast<double>(g[i])))
      throw std::runtime_error("adamw: non-finite gradient, step rejected (element " +
                               std::to_string(i) + ")");
  }
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.eps), wd = static_cast<T>(cfg.weight_decay);
  const T step = static_cast<T>(lr);
  for (int64_t i = 0; i < count; ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    w[i] -= step * (mhat / (std::sqrt(vhat) + eps) + wd * w[i]);
  }
}

// Moment buffers for a whole model, aligned with its parameter visit order.
template <typename T>
struct AdamWState {
  AdamWConfig cfg;
  int64_t step = 0;
  std::vector<std::string> names;
  std::vector<Tensor<T>> m, v;

  void init(const Model<T>& model, const AdamWConfig& c) {
    cfg = c;
    step = 0;
    names.clear();
    m.clear();
    v.clear();
    model.for_each_param([&](const std::string& name, const Tensor<T>& t) {
      names.push_back(name);
      m.emplace_back(t.shape);
      v.emplace_back(t.shape);
    });
  }

  // Applies one step at learning rate `lr_now` (schedules live in the caller).
  // A non-finite gradient anywhere rejects the whole step with no tensor or
  // step counter touched.
  void apply(Model<T>& model, const Model<T>& grads, double lr_now) {
    grads.for_each_param([&](const std::string& name, const Tensor<T>& t) {
      if (!all_finite(t))
        throw std::runtime_error("adamw: non-finite gradient in " + name + ", step rejected");
    });
    ++step;
    size_t idx = 0;
    std::vector<const Tensor<T>*> gts;
    grads.for_each_param([&](const std::string&, const Tensor<T>& t) { gts.push_back(&t); });
    model.for_each_param([&](const std::string& name, Tensor<T>& t) {
      if (idx >= gts.size() || !t.same_shape(*gts[idx]))
        throw std::logic_error("adamw: gradient layout mismatch at " + name);
      adamw_step(t.data(), gts[idx]->data(), m[idx].data(), v[idx].data(), t.size(), step,
                 lr_now, cfg);
      ++idx;
    });
  }
};

}  // namespace hyb
