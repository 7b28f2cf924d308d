#include "dpgen/losses.hpp"

namespace dpgen {

Tensor flatten_images(const Tensor& images) {
  if (images.ndim() == 2) return images;
  if (images.ndim() != 3) throw std::invalid_argument("flatten_images: expected [B,H,W]");
  return Tensor({images.shape[0], images.shape[1] * images.shape[2]}, images.data);
}

DiscriminatorLoss loss_discriminator(const MlpSpec& spec, const ParamVector& params,
                                     const Tensor& real, const Tensor& fake,
                                     const LossWeights& weights, RngStream& rng) {
  if (real.ndim() < 2 || real.shape[0] == 0)
    throw std::invalid_argument("loss_discriminator: empty batch");
  require_same_shape(real, fake, "loss_discriminator");
  const Tensor xr = flatten_images(real);
  const Tensor xf = flatten_images(fake);
  const int64_t b = xr.shape[0];

  DiscriminatorLoss out;
  out.grad_params = ParamVector::like(params);

  MlpCache cr, cf;
  Tensor yr = mlp_forward(spec, params, xr, &cr);
  Tensor yf = mlp_forward(spec, params, xf, &cf);
  double vr = 0.0, vf = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    vr += yr.data[static_cast<size_t>(i)];
    vf += yf.data[static_cast<size_t>(i)];
  }
  out.value = (vf - vr) / static_cast<double>(b);

  Tensor up_r = Tensor::full({b, 1}, -1.0 / static_cast<double>(b));
  Tensor up_f = Tensor::full({b, 1}, 1.0 / static_cast<double>(b));
  mlp_backward(spec, params, cr, up_r, &out.grad_params, nullptr);
  mlp_backward(spec, params, cf, up_f, &out.grad_params, nullptr);

  if (weights.lambda_gp != 0.0) {
    Tensor interp = Tensor::zeros(xr.shape);
    const int64_t d = xr.shape[1];
    for (int64_t i = 0; i < b; ++i) {
      const double alpha = rng.uniform();
      for (int64_t j = 0; j < d; ++j)
        interp.data[i * d + j] = alpha * xr.data[i * d + j] + (1.0 - alpha) * xf.data[i * d + j];
    }
    const double pen =
        mlp_grad_penalty(spec, params, interp, weights.lambda_gp, &out.grad_params);
    out.value += weights.lambda_gp * pen;
  }
  return out;
}

ClassifierLoss classifier_xent(const MlpSpec& spec, const ParamVector& params,
                               const Tensor& images, const std::vector<int>& labels) {
  const Tensor x = flatten_images(images);
  ClassifierLoss out;
  out.grad_params = ParamVector::like(params);
  MlpCache cache;
  Tensor logits = mlp_forward(spec, params, x, &cache);
  SoftmaxXent sx = softmax_xent(logits, labels);
  out.value = sx.loss;
  Tensor gx;
  mlp_backward(spec, params, cache, sx.grad_logits, &out.grad_params, &gx);
  out.grad_images = Tensor(images.shape, gx.data);
  return out;
}

ClassifierLoss loss_classifier(const MlpSpec& cls_spec, const ParamVector& cls_params,
                               const GeneratorSpec& gen_spec, const ParamVector& gen_params,
                               const Tensor& z, const std::vector<int>& labels,
                               const NoiseConfig& cfg, RngStream& rng) {
  if (z.shape[0] != static_cast<int64_t>(labels.size()))
    throw std::invalid_argument("loss_classifier: batch size mismatch");
  Tensor fake = generator_forward(gen_spec, gen_params, z, &labels, cfg, rng);
  return classifier_xent(cls_spec, cls_params, fake, labels);
}

ReconstructionLoss loss_reconstruction(const MlpSpec& enc_spec, const ParamVector& enc_params,
                                       const GeneratorSpec& gen_spec, const ParamVector& gen_params,
                                       const Tensor& x, const NoiseConfig& cfg, RngStream& rng) {
  if (x.shape.empty() || x.shape[0] == 0)
    throw std::invalid_argument("loss_reconstruction: empty batch");
  const Tensor xin = flatten_images(x);
  const int64_t b = xin.shape[0];

  MlpCache ecache;
  Tensor zlat = mlp_forward(enc_spec, enc_params, xin, &ecache);
  if (zlat.shape[1] != gen_spec.latent_dim)
    throw std::invalid_argument("loss_reconstruction: encoder output dim != generator latent dim");

  GenCache gcache;
  Tensor recon = generator_forward(gen_spec, gen_params, zlat, nullptr, cfg, rng, &gcache);

  ReconstructionLoss out;
  out.recon = recon;
  out.grad_recon = Tensor::zeros(recon.shape);
  double total = 0.0;
  for (size_t i = 0; i < recon.data.size(); ++i) {
    const double diff = recon.data[i] - x.data[i];
    total += diff * diff;
    out.grad_recon.data[i] = 2.0 * diff / static_cast<double>(b);
  }
  out.value = total / static_cast<double>(b);

  // encoder gradient flows through the (frozen) generator into the latent
  Tensor gz;
  generator_backward(gen_spec, gen_params, gcache, out.grad_recon, nullptr, &gz);
  out.grad_encoder = ParamVector::like(enc_params);
  mlp_backward(enc_spec, enc_params, ecache, gz, &out.grad_encoder, nullptr);
  return out;
}

GeneratorLoss loss_generator(const ModelBundle& bundle, int64_t disc_index, const Tensor& z,
                             const std::vector<int>& labels, const Tensor& x_real,
                             const LossWeights& weights, const NoiseConfig& cfg, RngStream& rng) {
  if (disc_index < 0 || disc_index >= bundle.num_discriminators())
    throw std::invalid_argument("loss_generator: discriminator index out of range");
  const int64_t b = z.shape[0];

  GeneratorLoss out;
  out.fake = generator_forward(bundle.gen_spec, bundle.gen_params, z, &labels, cfg, rng, &out.cache);

  // critic term on the z-batch
  {
    const ParamVector& dp = bundle.disc_params[static_cast<size_t>(disc_index)];
    MlpCache dc;
    Tensor score = mlp_forward(bundle.disc_spec, dp, flatten_images(out.fake), &dc);
    double v = 0.0;
    for (int64_t i = 0; i < b; ++i) v += score.data[static_cast<size_t>(i)];
    out.d_term = -v / static_cast<double>(b);
    Tensor up = Tensor::full({b, 1}, -1.0 / static_cast<double>(b));
    Tensor gx;
    mlp_backward(bundle.disc_spec, dp, dc, up, nullptr, &gx);
    out.d_source = Tensor(out.fake.shape, gx.data);
  }

  // classifier term on the same z-batch
  if (weights.lambda_c != 0.0) {
    ClassifierLoss cl = classifier_xent(bundle.cls_spec, bundle.cls_params, out.fake, labels);
    out.c_term = weights.lambda_c * cl.value;
    out.c_source = scale(cl.grad_images, weights.lambda_c);
  } else {
    out.c_term = 0.0;
    out.c_source = Tensor::zeros(out.fake.shape);
  }

  // reconstruction term on the real batch
  if (weights.gamma_recon != 0.0) {
    ReconstructionLoss re = loss_reconstruction(bundle.enc_spec, bundle.enc_params,
                                                bundle.gen_spec, bundle.gen_params, x_real, cfg, rng);
    out.e_term = weights.gamma_recon * re.value;
    out.e_source = scale(re.grad_recon, weights.gamma_recon);
  } else {
    out.e_term = 0.0;
    out.e_source = Tensor::zeros(out.fake.shape);
  }

  out.total = out.d_term + out.c_term + out.e_term;
  return out;
}

}  // namespace dpgen
