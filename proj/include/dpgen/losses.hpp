#pragma once

#include <vector>

#include "dpgen/models.hpp"

namespace dpgen {

struct LossWeights {
  double lambda_gp = 10.0;    // gradient penalty
  double lambda_c = 1.0;      // classifier term in the generator loss
  double gamma_recon = 1.0;   // reconstruction term in the generator loss
};

// [B,H,W] -> [B,H*W]
Tensor flatten_images(const Tensor& images);

struct DiscriminatorLoss {
  double value = 0.0;
  ParamVector grad_params;
};

// -mean D(real) + mean D(fake) + lambda_gp * mean (||grad D(interp)|| - 1)^2,
// interpolation factor drawn per sample from rng.
DiscriminatorLoss loss_discriminator(const MlpSpec& spec, const ParamVector& params,
                                     const Tensor& real, const Tensor& fake,
                                     const LossWeights& weights, RngStream& rng);

struct ClassifierLoss {
  double value = 0.0;
  ParamVector grad_params;
  Tensor grad_images;  // same shape as the image batch
};

// Cross-entropy of the classifier on an image batch; gradients for both the
// classifier parameters and the images.
ClassifierLoss classifier_xent(const MlpSpec& spec, const ParamVector& params,
                               const Tensor& images, const std::vector<int>& labels);

// Classifier loss on generated images G(z, y).
ClassifierLoss loss_classifier(const MlpSpec& cls_spec, const ParamVector& cls_params,
                               const GeneratorSpec& gen_spec, const ParamVector& gen_params,
                               const Tensor& z, const std::vector<int>& labels,
                               const NoiseConfig& cfg, RngStream& rng);

struct ReconstructionLoss {
  double value = 0.0;
  ParamVector grad_encoder;
  Tensor grad_recon;  // gradient wrt the reconstructed images [B,H,W]
  Tensor recon;       // G(E(x))
};

// mean_b ||G(E(x_b)) - x_b||^2 with the generator run unconditionally.
ReconstructionLoss loss_reconstruction(const MlpSpec& enc_spec, const ParamVector& enc_params,
                                       const GeneratorSpec& gen_spec, const ParamVector& gen_params,
                                       const Tensor& x, const NoiseConfig& cfg, RngStream& rng);

struct GeneratorLoss {
  double total = 0.0;
  double d_term = 0.0;  // -mean D(G(z,y))
  double c_term = 0.0;  // lambda_c * L_C
  double e_term = 0.0;  // gamma_recon * L_En
  Tensor d_source;      // [B,H,W] wrt the z-batch images
  Tensor c_source;      // [B,H,W] wrt the z-batch images (weight applied)
  Tensor e_source;      // [B,H,W] wrt the reconstructed images (weight applied)
  GenCache cache;       // z-batch forward cache, for the sanitized backprop
  Tensor fake;          // G(z, y)
};

// Composite generator objective. The three per-source image gradients are
// returned separately; combining them is the sanitizer's job.
GeneratorLoss loss_generator(const ModelBundle& bundle, int64_t disc_index, const Tensor& z,
                             const std::vector<int>& labels, const Tensor& x_real,
                             const LossWeights& weights, const NoiseConfig& cfg, RngStream& rng);

}  // namespace dpgen
