#pragma once

#include <functional>
#include <vector>

#include "dpgen/param_vector.hpp"
#include "dpgen/rng.hpp"
#include "dpgen/tensor.hpp"

namespace dpgen {

enum class Activation { ReLU, Tanh, Sigmoid };

double act_value(Activation a, double x);
double act_deriv(Activation a, double x);
// Second derivative, needed by the gradient-penalty double backward.
double act_deriv2(Activation a, double x);

Tensor act_forward(Activation a, const Tensor& x);
// grad wrt pre-activation given grad wrt output and the cached pre-activation.
Tensor act_backward(Activation a, const Tensor& pre, const Tensor& grad_out);

// y[b,:] = W x[b,:] + bias, with x [B,in], W [out,in], bias [out].
Tensor affine_forward(const Tensor& x, std::span<const double> w, std::span<const double> bias,
                      int64_t in_dim, int64_t out_dim);
void affine_backward(const Tensor& x, std::span<const double> w, const Tensor& grad_out,
                     int64_t in_dim, int64_t out_dim, std::span<double> grad_w,
                     std::span<double> grad_bias, Tensor* grad_x);

// 1x1 channel mix on feature maps [B,C,H,W] -> [B,C',H,W]; weights shared across pixels.
Tensor channel_mix_forward(const Tensor& x, std::span<const double> w, std::span<const double> bias,
                           int64_t c_in, int64_t c_out);
void channel_mix_backward(const Tensor& x, std::span<const double> w, const Tensor& grad_out,
                          int64_t c_in, int64_t c_out, std::span<double> grad_w,
                          std::span<double> grad_bias, Tensor* grad_x);

// Same mix but with a per-pixel bias map [C',H,W], which lets a stage express
// spatial structure finer than the upsampled blocks.
Tensor channel_mix_spatial_forward(const Tensor& x, std::span<const double> w,
                                   std::span<const double> bias, int64_t c_in, int64_t c_out);
void channel_mix_spatial_backward(const Tensor& x, std::span<const double> w,
                                  const Tensor& grad_out, int64_t c_in, int64_t c_out,
                                  std::span<double> grad_w, std::span<double> grad_bias,
                                  Tensor* grad_x);

// Nearest-neighbor 2x spatial upsample, [B,C,H,W] -> [B,C,2H,2W].
Tensor upsample2x_forward(const Tensor& x);
Tensor upsample2x_backward(const Tensor& grad_out);

struct SoftmaxXent {
  double loss = 0.0;     // mean over batch of -log p(label)
  Tensor grad_logits;    // [B,K], gradient of the mean loss
  Tensor probs;          // [B,K]
};
SoftmaxXent softmax_xent(const Tensor& logits, const std::vector<int>& labels);

// Central finite differences against an analytic gradient. Returns the max
// over coordinates of |fd - analytic| / max(1, |fd|, |analytic|).
double grad_check(const std::function<double(const ParamVector&)>& f, const ParamVector& v,
                  const ParamVector& analytic_grad, double step);

}  // namespace dpgen
