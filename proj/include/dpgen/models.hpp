#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dpgen/nn.hpp"
#include "dpgen/param_vector.hpp"
#include "dpgen/rng.hpp"
#include "dpgen/tensor.hpp"

namespace dpgen {

// ---------------------------------------------------------------------------
// MLP (discriminator, classifier, encoder, probes)
// ---------------------------------------------------------------------------

struct MlpSpec {
  std::vector<int64_t> widths;  // input, hidden..., output
  Activation act = Activation::Tanh;

  int64_t layers() const { return static_cast<int64_t>(widths.size()) - 1; }
  int64_t input_dim() const { return widths.front(); }
  int64_t output_dim() const { return widths.back(); }
};

ParamVector mlp_init(const MlpSpec& spec, RngStream& rng);

struct MlpCache {
  Tensor input;              // [B, in]
  std::vector<Tensor> pre;   // per layer [B, w_l]
  std::vector<Tensor> post;  // activated, last layer == pre (linear output)
  bool valid = false;
};

// Hidden layers use spec.act, output layer is linear.
Tensor mlp_forward(const MlpSpec& spec, const ParamVector& params, const Tensor& x,
                   MlpCache* cache = nullptr);
void mlp_backward(const MlpSpec& spec, const ParamVector& params, const MlpCache& cache,
                  const Tensor& grad_out, ParamVector* grad_params, Tensor* grad_input);

// Penultimate activations [B, w_{L-1}] from a cached forward.
Tensor mlp_penultimate(const MlpCache& cache);

// mean_b (||grad_x f(x_b)|| - 1)^2 for a scalar-output MLP, with its gradient
// wrt the parameters accumulated into grad_params scaled by `scale`.
// Differentiates through the input-gradient computation (double backward).
double mlp_grad_penalty(const MlpSpec& spec, const ParamVector& params, const Tensor& x,
                        double scale, ParamVector* grad_params);

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

struct NoiseConfig {
  double sigma_noise = 0.0;  // 0 disables injection exactly
};

// Y + N(0, sigma_noise^2) elementwise; input untouched, rng advances only when
// sigma_noise > 0.
Tensor inject_noise(const Tensor& feature_map, const NoiseConfig& cfg, RngStream& rng);

// Latent (+ optional class embedding) -> affine to a base feature map, then
// per stage: nearest 2x upsample, 1x1 channel mix, noise injection, activation.
// A final 1x1 mix and tanh produce the [-1,1] image.
struct GeneratorSpec {
  int64_t latent_dim = 16;
  int64_t embed_dim = 4;
  int64_t num_classes = 2;
  int64_t base_h = 2;
  int64_t base_w = 2;
  std::vector<int64_t> channels = {16, 16, 8};  // base, then per-stage outputs
  Activation act = Activation::Tanh;
  double head_bias_init = 0.0;

  int64_t stages() const { return static_cast<int64_t>(channels.size()) - 1; }
  int64_t out_h() const { return base_h << stages(); }
  int64_t out_w() const { return base_w << stages(); }
  int64_t input_dim() const { return latent_dim + embed_dim; }
};

ParamVector generator_init(const GeneratorSpec& spec, RngStream& rng);

struct GenCache {
  Tensor input;                  // [B, latent+embed]
  std::vector<int> labels;       // empty when unconditional
  Tensor fc_pre;                 // [B, c0*base_h*base_w]
  std::vector<Tensor> up_in;     // upsampled stage inputs
  std::vector<Tensor> mix_pre;   // stage pre-activations incl. injected noise
  Tensor head_pre;               // [B, 1, H, W]
  Tensor image;                  // [B, H, W]
  bool valid = false;
};

// labels == nullptr runs the unconditional path (zero embedding).
Tensor generator_forward(const GeneratorSpec& spec, const ParamVector& params, const Tensor& z,
                         const std::vector<int>* labels, const NoiseConfig& cfg, RngStream& rng,
                         GenCache* cache = nullptr);

// Exact reverse-mode gradients; injected noise is a cached additive constant.
void generator_backward(const GeneratorSpec& spec, const ParamVector& params,
                        const GenCache& cache, const Tensor& grad_image,
                        ParamVector* grad_params, Tensor* grad_z);

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

struct ModelBundle {
  GeneratorSpec gen_spec;
  ParamVector gen_params;
  MlpSpec disc_spec;
  std::vector<ParamVector> disc_params;  // one per dataset subset
  MlpSpec cls_spec;
  ParamVector cls_params;
  MlpSpec enc_spec;
  ParamVector enc_params;

  int64_t num_discriminators() const { return static_cast<int64_t>(disc_params.size()); }
};

}  // namespace dpgen
