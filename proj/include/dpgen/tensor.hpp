#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpgen/common.hpp"

namespace dpgen {

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
    n *= d;
  }
  return n;
}

// Dense row-major array of 64-bit reals.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor shape does not match data length");
  }

  static Tensor zeros(const std::vector<int64_t>& s) {
    return Tensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), 0.0));
  }
  static Tensor full(const std::vector<int64_t>& s, double v) {
    return Tensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), v));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape.at(i); }
  size_t ndim() const { return shape.size(); }

  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data) v *= s;
  return out;
}

// y += a * x
inline void axpy(Tensor& y, double a, const Tensor& x) {
  require_same_shape(y, x, "axpy");
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
}

inline double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Euclidean norm over all entries.
inline double l2_norm(const Tensor& v) {
  double s = 0.0;
  for (double x : v.data) s += x * x;
  return std::sqrt(s);
}

inline double sum(const Tensor& v) {
  double s = 0.0;
  for (double x : v.data) s += x;
  return s;
}

inline double mean(const Tensor& v) {
  if (v.data.empty()) throw std::invalid_argument("mean of empty tensor");
  return sum(v) / static_cast<double>(v.data.size());
}

inline bool all_finite(const Tensor& v) {
  for (double x : v.data)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void ensure_finite(const Tensor& v, const char* what) {
  if (!all_finite(v)) throw NumericError(std::string(what) + ": non-finite value");
}

// Mean over the leading (batch) axis: [B, rest...] -> [rest...].
inline Tensor batch_mean(const Tensor& t) {
  if (t.ndim() < 2) throw std::invalid_argument("batch_mean needs a batch axis");
  const int64_t b = t.shape[0];
  std::vector<int64_t> rest(t.shape.begin() + 1, t.shape.end());
  Tensor out = Tensor::zeros(rest);
  const int64_t stride = out.numel();
  for (int64_t i = 0; i < b; ++i)
    for (int64_t j = 0; j < stride; ++j) out.data[j] += t.data[i * stride + j];
  for (double& v : out.data) v /= static_cast<double>(b);
  return out;
}

}  // namespace dpgen
