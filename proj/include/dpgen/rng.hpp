#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "dpgen/tensor.hpp"

namespace dpgen {

// Counter-based random stream: the value at position p is a pure function of
// (seed, p), so streams can be split per consumer and replayed exactly.
// One position == one sample, regardless of how many raw words it consumes.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(uint64_t seed, uint64_t position = 0) : seed_(seed), pos_(position) {}

  // Independent stream for a named consumer; children of distinct keys never collide.
  RngStream substream(uint64_t key) const {
    return RngStream(mix64(seed_ ^ mix64(key + 0x2545F4914F6CDD1DULL)));
  }
  RngStream substream(std::string_view name) const { return substream(fnv1a(name)); }

  // Uniform in [0, 1).
  double uniform() {
    uint64_t w = word(2 * pos_);
    ++pos_;
    return static_cast<double>(w >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    int64_t v = static_cast<int64_t>(uniform() * static_cast<double>(n));
    return v < n ? v : n - 1;
  }

  double gaussian(double mu = 0.0, double sigma = 1.0) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian: std must be nonnegative");
    uint64_t w1 = word(2 * pos_);
    uint64_t w2 = word(2 * pos_ + 1);
    ++pos_;
    if (sigma == 0.0) return mu;
    // u1 in (0, 1] keeps the log finite.
    double u1 = (static_cast<double>(w1 >> 11) + 1.0) * 0x1.0p-53;
    double u2 = static_cast<double>(w2 >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  uint64_t seed() const { return seed_; }
  uint64_t position() const { return pos_; }
  void set_position(uint64_t p) { pos_ = p; }
  void skip(uint64_t n) { pos_ += n; }

  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ULL;
    }
    return h;
  }

 private:
  static uint64_t mix64(uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
  }

  uint64_t word(uint64_t index) const {
    uint64_t x = seed_ + 0x9E3779B97F4A7C15ULL * (index + 1);
    return mix64(mix64(x) ^ 0xD1B54A32D192ED03ULL);
  }

  uint64_t seed_ = 0;
  uint64_t pos_ = 0;
};

// Tensor of i.i.d. N(mean, std^2) draws; advances rng by numel(shape) positions.
inline Tensor gaussian_sample(const std::vector<int64_t>& shape, double mean, double std,
                              RngStream& rng) {
  if (std < 0.0) throw std::invalid_argument("gaussian_sample: std must be nonnegative");
  Tensor out = Tensor::zeros(shape);
  for (double& v : out.data) v = rng.gaussian(mean, std);
  return out;
}

}  // namespace dpgen
