#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "dpgen/param_vector.hpp"
#include "dpgen/rng.hpp"
#include "dpgen/tensor.hpp"

namespace dpgen {

struct ClipConfig {
  double c1 = 1.0;  // gradient clip threshold
  double c2 = 1.0;  // accumulated-error clip threshold
};

struct DpNoiseConfig {
  double sigma = 1.0;  // noise multiplier
  bool test_zero_noise = false;

  static DpNoiseConfig disabled_for_tests() { return DpNoiseConfig{1.0, true}; }
};

enum class GradSource : int { Discriminator = 0, Classifier = 1, Encoder = 2 };
inline constexpr size_t kNumSources = 3;

enum class EfMode { PerSource, Aggregate };

// g scaled to norm at most c, direction preserved; unchanged when ||g|| <= c.
Tensor clip_to_norm(const Tensor& g, double c);

// Accumulated clipping error per gradient source. Shapes are fixed at
// construction; the trainer therefore needs a constant batch size.
struct EfState {
  EfMode mode = EfMode::PerSource;
  std::vector<int64_t> shape;
  std::array<Tensor, kNumSources> errors;
  int64_t step = 0;

  static EfState zeros(const std::vector<int64_t>& shape, EfMode mode);
};

using SourceGrads = std::array<std::optional<Tensor>, kNumSources>;

// One error-feedback step: per source, v_s = clip(g_s, C1) + clip(e_s, C2) and
// e_s <- e_s + g_s - v_s; returns the summed update direction. In aggregate
// mode the source gradients are summed first and a single error is tracked.
Tensor ef_step(EfState& state, const SourceGrads& grads, const ClipConfig& clip);

// i.i.d. N(0, sigma^2 * C1^2 * (1 + 2*C2)) per entry.
Tensor dp_noise(const std::vector<int64_t>& shape, const DpNoiseConfig& noise,
                const ClipConfig& clip, RngStream& rng);

// Mean-reduces batched per-source gradients to the tracked shape, runs the
// error-feedback step, and adds calibrated DP noise. The result is the per
// iteration release that gets backpropagated to the generator parameters.
Tensor sanitize_hook(const SourceGrads& grads, EfState& state, const ClipConfig& clip,
                     const DpNoiseConfig& noise, RngStream& rng);

// x <- x - eta * direction
void apply_update(ParamVector& params, const ParamVector& direction, double eta);

}  // namespace dpgen
