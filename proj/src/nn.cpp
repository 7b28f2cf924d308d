#include "dpgen/nn.hpp"

#include <algorithm>
#include <cmath>

namespace dpgen {

double act_value(Activation a, double x) {
  switch (a) {
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return 0.0;
}

double act_deriv(Activation a, double x) {
  switch (a) {
    case Activation::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Sigmoid: {
      double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
  }
  return 0.0;
}

double act_deriv2(Activation a, double x) {
  switch (a) {
    case Activation::ReLU: return 0.0;
    case Activation::Tanh: {
      double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::Sigmoid: {
      double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
  }
  return 0.0;
}

Tensor act_forward(Activation a, const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data) v = act_value(a, v);
  return out;
}

Tensor act_backward(Activation a, const Tensor& pre, const Tensor& grad_out) {
  require_same_shape(pre, grad_out, "act_backward");
  Tensor out = grad_out;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= act_deriv(a, pre.data[i]);
  return out;
}

Tensor affine_forward(const Tensor& x, std::span<const double> w, std::span<const double> bias,
                      int64_t in_dim, int64_t out_dim) {
  if (x.ndim() != 2 || x.shape[1] != in_dim)
    throw std::invalid_argument("affine_forward: input shape mismatch");
  const int64_t b = x.shape[0];
  Tensor y = Tensor::zeros({b, out_dim});
  for (int64_t i = 0; i < b; ++i) {
    const double* xi = x.data.data() + i * in_dim;
    double* yi = y.data.data() + i * out_dim;
    for (int64_t o = 0; o < out_dim; ++o) {
      const double* wrow = w.data() + o * in_dim;
      double s = bias[static_cast<size_t>(o)];
      for (int64_t k = 0; k < in_dim; ++k) s += wrow[k] * xi[k];
      yi[o] = s;
    }
  }
  return y;
}

void affine_backward(const Tensor& x, std::span<const double> w, const Tensor& grad_out,
                     int64_t in_dim, int64_t out_dim, std::span<double> grad_w,
                     std::span<double> grad_bias, Tensor* grad_x) {
  const int64_t b = x.shape[0];
  if (grad_out.ndim() != 2 || grad_out.shape[0] != b || grad_out.shape[1] != out_dim)
    throw std::invalid_argument("affine_backward: grad shape mismatch");
  if (grad_x) *grad_x = Tensor::zeros({b, in_dim});
  for (int64_t i = 0; i < b; ++i) {
    const double* xi = x.data.data() + i * in_dim;
    const double* gi = grad_out.data.data() + i * out_dim;
    double* gxi = grad_x ? grad_x->data.data() + i * in_dim : nullptr;
    for (int64_t o = 0; o < out_dim; ++o) {
      const double g = gi[o];
      if (g == 0.0) continue;
      double* gw = grad_w.data() + o * in_dim;
      const double* wrow = w.data() + o * in_dim;
      grad_bias[static_cast<size_t>(o)] += g;
      for (int64_t k = 0; k < in_dim; ++k) {
        gw[k] += g * xi[k];
        if (gxi) gxi[k] += g * wrow[k];
      }
    }
  }
}

Tensor channel_mix_forward(const Tensor& x, std::span<const double> w, std::span<const double> bias,
                           int64_t c_in, int64_t c_out) {
  if (x.ndim() != 4 || x.shape[1] != c_in)
    throw std::invalid_argument("channel_mix_forward: input shape mismatch");
  const int64_t b = x.shape[0], h = x.shape[2], wd = x.shape[3];
  const int64_t hw = h * wd;
  Tensor y = Tensor::zeros({b, c_out, h, wd});
  for (int64_t i = 0; i < b; ++i) {
    const double* xi = x.data.data() + i * c_in * hw;
    double* yi = y.data.data() + i * c_out * hw;
    for (int64_t co = 0; co < c_out; ++co) {
      const double* wrow = w.data() + co * c_in;
      double* yrow = yi + co * hw;
      for (int64_t p = 0; p < hw; ++p) yrow[p] = bias[static_cast<size_t>(co)];
      for (int64_t ci = 0; ci < c_in; ++ci) {
        const double wv = wrow[ci];
        if (wv == 0.0) continue;
        const double* xrow = xi + ci * hw;
        for (int64_t p = 0; p < hw; ++p) yrow[p] += wv * xrow[p];
      }
    }
  }
  return y;
}

void channel_mix_backward(const Tensor& x, std::span<const double> w, const Tensor& grad_out,
                          int64_t c_in, int64_t c_out, std::span<double> grad_w,
                          std::span<double> grad_bias, Tensor* grad_x) {
  const int64_t b = x.shape[0], h = x.shape[2], wd = x.shape[3];
  const int64_t hw = h * wd;
  if (grad_out.ndim() != 4 || grad_out.shape[1] != c_out)
    throw std::invalid_argument("channel_mix_backward: grad shape mismatch");
  if (grad_x) *grad_x = Tensor::zeros(x.shape);
  for (int64_t i = 0; i < b; ++i) {
    const double* xi = x.data.data() + i * c_in * hw;
    const double* gi = grad_out.data.data() + i * c_out * hw;
    double* gxi = grad_x ? grad_x->data.data() + i * c_in * hw : nullptr;
    for (int64_t co = 0; co < c_out; ++co) {
      const double* grow = gi + co * hw;
      const double* wrow = w.data() + co * c_in;
      double* gwrow = grad_w.data() + co * c_in;
      double gb = 0.0;
      for (int64_t p = 0; p < hw; ++p) gb += grow[p];
      grad_bias[static_cast<size_t>(co)] += gb;
      for (int64_t ci = 0; ci < c_in; ++ci) {
        const double* xrow = xi + ci * hw;
        double s = 0.0;
        for (int64_t p = 0; p < hw; ++p) s += grow[p] * xrow[p];
        gwrow[ci] += s;
        if (gxi) {
          double* gxrow = gxi + ci * hw;
          const double wv = wrow[ci];
          for (int64_t p = 0; p < hw; ++p) gxrow[p] += wv * grow[p];
        }
      }
    }
  }
}

Tensor channel_mix_spatial_forward(const Tensor& x, std::span<const double> w,
                                   std::span<const double> bias, int64_t c_in, int64_t c_out) {
  if (x.ndim() != 4 || x.shape[1] != c_in)
    throw std::invalid_argument("channel_mix_spatial_forward: input shape mismatch");
  const int64_t b = x.shape[0], h = x.shape[2], wd = x.shape[3];
  const int64_t hw = h * wd;
  if (static_cast<int64_t>(bias.size()) != c_out * hw)
    throw std::invalid_argument("channel_mix_spatial_forward: bias map size mismatch");
  Tensor y = Tensor::zeros({b, c_out, h, wd});
  for (int64_t i = 0; i < b; ++i) {
    const double* xi = x.data.data() + i * c_in * hw;
    double* yi = y.data.data() + i * c_out * hw;
    for (int64_t co = 0; co < c_out; ++co) {
      const double* wrow = w.data() + co * c_in;
      const double* brow = bias.data() + co * hw;
      double* yrow = yi + co * hw;
      for (int64_t p = 0; p < hw; ++p) yrow[p] = brow[p];
      for (int64_t ci = 0; ci < c_in; ++ci) {
        const double wv = wrow[ci];
        if (wv == 0.0) continue;
        const double* xrow = xi + ci * hw;
        for (int64_t p = 0; p < hw; ++p) yrow[p] += wv * xrow[p];
      }
    }
  }
  return y;
}

void channel_mix_spatial_backward(const Tensor& x, std::span<const double> w,
                                  const Tensor& grad_out, int64_t c_in, int64_t c_out,
                                  std::span<double> grad_w, std::span<double> grad_bias,
                                  Tensor* grad_x) {
  const int64_t b = x.shape[0], h = x.shape[2], wd = x.shape[3];
  const int64_t hw = h * wd;
  if (grad_out.ndim() != 4 || grad_out.shape[1] != c_out)
    throw std::invalid_argument("channel_mix_spatial_backward: grad shape mismatch");
  if (grad_x) *grad_x = Tensor::zeros(x.shape);
  for (int64_t i = 0; i < b; ++i) {
    const double* xi = x.data.data() + i * c_in * hw;
    const double* gi = grad_out.data.data() + i * c_out * hw;
    double* gxi = grad_x ? grad_x->data.data() + i * c_in * hw : nullptr;
    for (int64_t co = 0; co < c_out; ++co) {
      const double* grow = gi + co * hw;
      const double* wrow = w.data() + co * c_in;
      double* gwrow = grad_w.data() + co * c_in;
      double* gbrow = grad_bias.data() + co * hw;
      for (int64_t p = 0; p < hw; ++p) gbrow[p] += grow[p];
      for (int64_t ci = 0; ci < c_in; ++ci) {
        const double* xrow = xi + ci * hw;
        double s = 0.0;
        for (int64_t p = 0; p < hw; ++p) s += grow[p] * xrow[p];
        gwrow[ci] += s;
        if (gxi) {
          double* gxrow = gxi + ci * hw;
          const double wv = wrow[ci];
          for (int64_t p = 0; p < hw; ++p) gxrow[p] += wv * grow[p];
        }
      }
    }
  }
}

Tensor upsample2x_forward(const Tensor& x) {
  if (x.ndim() != 4) throw std::invalid_argument("upsample2x_forward: expected [B,C,H,W]");
  const int64_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  Tensor y = Tensor::zeros({b, c, 2 * h, 2 * w});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* xp = x.data.data() + (i * c + ch) * h * w;
      double* yp = y.data.data() + (i * c + ch) * 4 * h * w;
      for (int64_t r = 0; r < h; ++r)
        for (int64_t col = 0; col < w; ++col) {
          const double v = xp[r * w + col];
          double* base = yp + (2 * r) * (2 * w) + 2 * col;
          base[0] = v;
          base[1] = v;
          base[2 * w] = v;
          base[2 * w + 1] = v;
        }
    }
  return y;
}

Tensor upsample2x_backward(const Tensor& grad_out) {
  if (grad_out.ndim() != 4 || grad_out.shape[2] % 2 != 0 || grad_out.shape[3] % 2 != 0)
    throw std::invalid_argument("upsample2x_backward: expected even [B,C,2H,2W]");
  const int64_t b = grad_out.shape[0], c = grad_out.shape[1];
  const int64_t h = grad_out.shape[2] / 2, w = grad_out.shape[3] / 2;
  Tensor gx = Tensor::zeros({b, c, h, w});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      double* gp = gx.data.data() + (i * c + ch) * h * w;
      const double* go = grad_out.data.data() + (i * c + ch) * 4 * h * w;
      for (int64_t r = 0; r < h; ++r)
        for (int64_t col = 0; col < w; ++col) {
          const double* base = go + (2 * r) * (2 * w) + 2 * col;
          gp[r * w + col] = base[0] + base[1] + base[2 * w] + base[2 * w + 1];
        }
    }
  return gx;
}

SoftmaxXent softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2) throw std::invalid_argument("softmax_xent: expected [B,K] logits");
  const int64_t b = logits.shape[0], k = logits.shape[1];
  if (static_cast<int64_t>(labels.size()) != b)
    throw std::invalid_argument("softmax_xent: label count mismatch");
  SoftmaxXent out;
  out.probs = Tensor::zeros({b, k});
  out.grad_logits = Tensor::zeros({b, k});
  double total = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= k) throw std::invalid_argument("softmax_xent: label out of range");
    const double* row = logits.data.data() + i * k;
    double m = row[0];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
    const double logz = std::log(z) + m;
    double* prow = out.probs.data.data() + i * k;
    double* grow = out.grad_logits.data.data() + i * k;
    for (int64_t j = 0; j < k; ++j) {
      prow[j] = std::exp(row[j] - logz);
      grow[j] = prow[j] / static_cast<double>(b);
    }
    grow[y] -= 1.0 / static_cast<double>(b);
    total += logz - row[y];
  }
  out.loss = total / static_cast<double>(b);
  return out;
}

double grad_check(const std::function<double(const ParamVector&)>& f, const ParamVector& v,
                  const ParamVector& analytic_grad, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  if (v.size() != analytic_grad.size())
    throw std::invalid_argument("grad_check: gradient size mismatch");
  ParamVector probe = v;
  double worst = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = f(probe);
    probe[i] = orig - step;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("grad_check: non-finite function value");
    const double fd = (fp - fm) / (2.0 * step);
    const double an = analytic_grad[i];
    const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace dpgen
