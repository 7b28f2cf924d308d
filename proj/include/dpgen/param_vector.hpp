#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpgen/tensor.hpp"

namespace dpgen {

struct ParamSegment {
  std::string name;
  std::vector<int64_t> shape;
  size_t offset = 0;
  size_t count = 0;
};

// Flat parameter storage with named, shaped segments. Segment order is fixed
// by construction order, so two vectors built from the same descriptor are
// elementwise comparable.
class ParamVector {
 public:
  ParamVector() = default;

  size_t add(std::string name, std::vector<int64_t> shape) {
    ParamSegment s;
    s.name = std::move(name);
    s.shape = std::move(shape);
    s.offset = data_.size();
    s.count = static_cast<size_t>(shape_numel(s.shape));
    data_.resize(data_.size() + s.count, 0.0);
    segments_.push_back(std::move(s));
    return segments_.size() - 1;
  }

  bool has(std::string_view name) const { return find(name) != nullptr; }

  std::span<double> seg(std::string_view name) {
    const ParamSegment* s = find(name);
    if (!s) throw std::invalid_argument("unknown parameter segment: " + std::string(name));
    return {data_.data() + s->offset, s->count};
  }
  std::span<const double> seg(std::string_view name) const {
    const ParamSegment* s = find(name);
    if (!s) throw std::invalid_argument("unknown parameter segment: " + std::string(name));
    return {data_.data() + s->offset, s->count};
  }

  const ParamSegment& segment_info(std::string_view name) const {
    const ParamSegment* s = find(name);
    if (!s) throw std::invalid_argument("unknown parameter segment: " + std::string(name));
    return *s;
  }

  Tensor unflatten(std::string_view name) const {
    const ParamSegment& s = segment_info(name);
    return Tensor(s.shape, std::vector<double>(data_.begin() + static_cast<ptrdiff_t>(s.offset),
                                               data_.begin() +
                                                   static_cast<ptrdiff_t>(s.offset + s.count)));
  }

  void set_segment(std::string_view name, const Tensor& t) {
    const ParamSegment& s = segment_info(name);
    if (t.shape != s.shape) throw std::invalid_argument("set_segment: shape mismatch");
    std::copy(t.data.begin(), t.data.end(), data_.begin() + static_cast<ptrdiff_t>(s.offset));
  }

  const std::vector<ParamSegment>& segments() const { return segments_; }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }
  size_t size() const { return data_.size(); }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  // Same layout, zero values.
  static ParamVector like(const ParamVector& other) {
    ParamVector p;
    p.segments_ = other.segments_;
    p.data_.assign(other.data_.size(), 0.0);
    return p;
  }

  bool same_layout(const ParamVector& other) const {
    if (segments_.size() != other.segments_.size()) return false;
    for (size_t i = 0; i < segments_.size(); ++i) {
      if (segments_[i].name != other.segments_[i].name ||
          segments_[i].shape != other.segments_[i].shape)
        return false;
    }
    return true;
  }

 private:
  const ParamSegment* find(std::string_view name) const {
    for (const auto& s : segments_)
      if (s.name == name) return &s;
    return nullptr;
  }

  std::vector<ParamSegment> segments_;
  std::vector<double> data_;
};

inline void axpy(ParamVector& y, double a, const ParamVector& x) {
  if (y.size() != x.size()) throw std::invalid_argument("axpy: parameter size mismatch");
  for (size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double l2_norm(const ParamVector& v) {
  double s = 0.0;
  for (size_t i = 0; i < v.size(); ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace dpgen
