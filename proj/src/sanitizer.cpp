#include "dpgen/sanitizer.hpp"

#include <cmath>

namespace dpgen {

Tensor clip_to_norm(const Tensor& g, double c) {
  if (c <= 0.0) throw std::invalid_argument("clip_to_norm: threshold must be positive");
  const double n = l2_norm(g);
  if (n <= c) return g;
  return scale(g, c / n);
}

EfState EfState::zeros(const std::vector<int64_t>& shape, EfMode mode) {
  EfState s;
  s.mode = mode;
  s.shape = shape;
  for (auto& e : s.errors) e = Tensor::zeros(shape);
  s.step = 0;
  return s;
}

namespace {

// Accept either the tracked shape or a batch-prefixed version of it, in which
// case the batch mean of per-sample gradients is taken.
Tensor to_state_shape(const Tensor& g, const std::vector<int64_t>& shape) {
  if (g.shape == shape) return g;
  if (g.ndim() == shape.size() + 1 &&
      std::vector<int64_t>(g.shape.begin() + 1, g.shape.end()) == shape) {
    Tensor m = batch_mean(g);
    // per-sample grads of a batch-mean loss carry 1/B each; their mean is sum/B^2,
    // so rescale by B to get the batch-mean of per-sample-loss gradients
    return scale(m, static_cast<double>(g.shape[0]));
  }
  throw InvalidStateError("sanitizer: gradient shape does not match tracked error shape");
}

}  // namespace

Tensor ef_step(EfState& state, const SourceGrads& grads, const ClipConfig& clip) {
  if (clip.c1 <= 0.0 || clip.c2 <= 0.0)
    throw std::invalid_argument("ef_step: clip thresholds must be positive");
  Tensor v = Tensor::zeros(state.shape);
  if (state.mode == EfMode::Aggregate) {
    Tensor g = Tensor::zeros(state.shape);
    for (const auto& og : grads)
      if (og) axpy(g, 1.0, to_state_shape(*og, state.shape));
    Tensor vs = add(clip_to_norm(g, clip.c1), clip_to_norm(state.errors[0], clip.c2));
    Tensor& e = state.errors[0];
    e = add(e, sub(g, vs));
    v = std::move(vs);
  } else {
    for (size_t s = 0; s < kNumSources; ++s) {
      if (!grads[s]) continue;
      Tensor g = to_state_shape(*grads[s], state.shape);
      Tensor vs = add(clip_to_norm(g, clip.c1), clip_to_norm(state.errors[s], clip.c2));
      Tensor& e = state.errors[s];
      e = add(e, sub(g, vs));
      axpy(v, 1.0, vs);
    }
  }
  state.step += 1;
  return v;
}

Tensor dp_noise(const std::vector<int64_t>& shape, const DpNoiseConfig& noise,
                const ClipConfig& clip, RngStream& rng) {
  if (noise.sigma <= 0.0) throw std::invalid_argument("dp_noise: sigma must be positive");
  const double variance = noise.sigma * noise.sigma * clip.c1 * clip.c1 * (1.0 + 2.0 * clip.c2);
  return gaussian_sample(shape, 0.0, std::sqrt(variance), rng);
}

Tensor sanitize_hook(const SourceGrads& grads, EfState& state, const ClipConfig& clip,
                     const DpNoiseConfig& noise, RngStream& rng) {
  Tensor v = ef_step(state, grads, clip);
  if (noise.test_zero_noise) return v;
  Tensor w = dp_noise(state.shape, noise, clip, rng);
  return add(v, w);
}

void apply_update(ParamVector& params, const ParamVector& direction, double eta) {
  if (eta <= 0.0) throw std::invalid_argument("apply_update: step size must be positive");
  if (params.size() != direction.size())
    throw std::invalid_argument("apply_update: size mismatch");
  axpy(params, -eta, direction);
}

}  // namespace dpgen
