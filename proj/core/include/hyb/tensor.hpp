#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyb {

// Dense row-major tensor. Shapes are fixed at construction; the class is a
// storage container, all math lives in the kernels that consume it.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), v(count(shape)) {}
  Tensor(std::initializer_list<int64_t> s) : Tensor(std::vector<int64_t>(s)) {}

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  bool empty() const { return v.empty(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  // Multi-index access for tests and small code paths; hot loops index flat.
  T& at(std::initializer_list<int64_t> idx) { return v[static_cast<size_t>(flat(idx))]; }
  const T& at(std::initializer_list<int64_t> idx) const {
    return v[static_cast<size_t>(flat(idx))];
  }

  int64_t flat(std::initializer_list<int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank())
      throw std::invalid_argument("tensor: index rank mismatch");
    int64_t off = 0;
    auto it = idx.begin();
    for (size_t k = 0; k < shape.size(); ++k, ++it) {
      if (*it < 0 || *it >= shape[k]) throw std::out_of_range("tensor: index out of range");
      off = off * shape[k] + *it;
    }
    return off;
  }

  void fill(T x) {
    for (auto& e : v) e = x;
  }
  void zero() { fill(T(0)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline std::string shape_string(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Converts a flat offset back to a bracketed multi-index, for diagnostics.
inline std::string index_string(const std::vector<int64_t>& shape, int64_t flat) {
  std::vector<int64_t> idx(shape.size(), 0);
  for (size_t k = shape.size(); k-- > 0;) {
    if (shape[k] > 0) {
      idx[k] = flat % shape[k];
      flat /= shape[k];
    }
  }
  return shape_string(idx);
}

// Rejects NaN/Inf at operation entry. The message names the first offending
// element so bad inputs are traceable to a position, not just an op.
template <typename T>
void check_finite(const Tensor<T>& t, const char* op, const char* arg) {
  for (int64_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      throw std::invalid_argument(std::string(op) + ": non-finite " + arg + " at " +
                                  index_string(t.shape, i));
    }
  }
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

}  // namespace hyb
