#pragma once

#include <cstdint>

#include "hyb/tensor.hpp"

namespace hyb {

// y[r,o] = sum_i w[o,i] x[r,i]   (w: [out,in], x: rows of in, y: rows of out)
template <typename T>
void linear_forward(const Tensor<T>& w, const T* x, int64_t rows, T* y) {
  const int64_t out = w.dim(0), in = w.dim(1);
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * in;
    T* yr = y + r * out;
    for (int64_t o = 0; o < out; ++o) {
      const T* wo = w.data() + o * in;
      T acc = T(0);
      for (int64_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
      yr[o] = acc;
    }
  }
}

// Accumulates dw[o,i] += sum_r gy[r,o] x[r,i] and dx[r,i] += sum_o gy[r,o] w[o,i].
// Either gradient output may be null to skip it.
template <typename T>
void linear_backward(const Tensor<T>& w, const T* x, const T* gy, int64_t rows,
                     Tensor<T>* dw, T* dx) {
  const int64_t out = w.dim(0), in = w.dim(1);
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * in;
    const T* gr = gy + r * out;
    for (int64_t o = 0; o < out; ++o) {
      const T g = gr[o];
      if (g == T(0)) continue;
      if (dw) {
        T* dwo = dw->data() + o * in;
        for (int64_t i = 0; i < in; ++i) dwo[i] += g * xr[i];
      }
      if (dx) {
        const T* wo = w.data() + o * in;
        T* dxr = dx + r * in;
        for (int64_t i = 0; i < in; ++i) dxr[i] += g * wo[i];
      }
    }
  }
}

}  // namespace hyb
