#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpgen/accountant.hpp"
#include "dpgen/losses.hpp"
#include "dpgen/models.hpp"
#include "dpgen/sanitizer.hpp"

namespace dpgen {

// Everything a run needs, all defaults materialized. The flat key=value file
// format rejects unknown keys so hyperparameter typos fail loudly.
struct TrainConfig {
  // run
  uint64_t seed = 42;

  // data
  std::string data = "synth";  // synth | idx
  int classes = 2;
  int synth_per_class = 200;
  int64_t image_size = 8;

  // model shapes
  int64_t latent_dim = 16;
  int64_t embed_dim = 4;
  std::vector<int64_t> gen_channels = {12, 12, 8};
  std::vector<int64_t> disc_hidden = {64, 64};
  std::vector<int64_t> cls_hidden = {32};
  std::vector<int64_t> enc_hidden = {32};

  // training loop
  int64_t k = 10;
  int64_t batch = 32;
  int64_t iterations = 500;
  int64_t n_dis = 5;
  int64_t n_en = 1;
  int64_t n_f = 1;
  int64_t n_r = 1;
  int64_t n_pre = 200;
  double eta_d = 1e-4;
  double eta_c = 1e-4;
  double eta_g = 1e-4;
  double eta_e = 1e-4;  // defaults to eta_c when not set explicitly

  // privacy
  double gamma = 0.1;  // defaults to 1/k when not set explicitly
  double sigma = 2.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double eps = 10.0;
  double delta = 1e-5;
  std::string ef_mode = "per_source";  // per_source | aggregate

  // losses
  double sigma_noise = 0.1;
  double gamma_recon = 1.0;
  double lambda_c = 1.0;
  double lambda_gp = 10.0;

  // generator-step label draw: one shared label per iteration vs i.i.d.
  bool single_label_batch = true;

  // EMA rate for the released generator parameters; 0 releases the last iterate
  double gen_avg_decay = 0.01;

  // heavy-ball coefficient on the sanitized generator updates
  double gen_momentum = 0.0;

  // inverse-decay halflife for eta_g (steps); 0 keeps eta_g constant. A
  // decaying step shrinks the DP-noise ball as training converges.
  int64_t eta_g_halflife = 0;
  // iteration at which the decay starts; full rate before that
  int64_t eta_g_decay_start = 0;

  // L2 decay on the generator parameters; the restoring force keeps the
  // DP-noise random walk bounded and pre-activations out of saturation
  double gen_weight_decay = 0.0;

  // multiplier on eta_g for weight matrices (biases use eta_g as is); bias
  // paths integrate the noisy release linearly, weight paths couple it
  // multiplicatively, so under heavy DP noise weights want smaller steps
  double gen_weight_lr_scale = 1.0;

  // logging / evaluation
  int64_t eval_interval = 50;
  int64_t eval_samples = 64;

  // pinned feature classifier for FD / IS
  int64_t feat_hidden = 32;
  int64_t feat_steps = 400;
  uint64_t feat_seed = 7;

  // derived views
  GeneratorSpec generator_spec() const;
  MlpSpec discriminator_spec() const;
  MlpSpec classifier_spec() const;
  MlpSpec encoder_spec() const;
  ClipConfig clip() const { return ClipConfig{c1, c2}; }
  NoiseConfig noise() const { return NoiseConfig{sigma_noise}; }
  DpNoiseConfig dp_noise_cfg() const { return DpNoiseConfig{sigma, false}; }
  LossWeights weights() const { return LossWeights{lambda_gp, lambda_c, gamma_recon}; }
  DpBudget budget() const { return DpBudget{eps, delta}; }
  EfMode ef() const;

  void validate() const;  // throws ConfigError
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config_file(const std::string& path);

// Canonical text with every key spelled out; identical configs give identical
// text, which is what the checkpoint digest hashes.
std::string config_to_text(const TrainConfig& cfg);
uint64_t config_digest(const TrainConfig& cfg);

}  // namespace dpgen
