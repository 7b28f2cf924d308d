#include "dpgen/models.hpp"

#include <cmath>

namespace dpgen {

namespace {

std::string fc_w(int64_t l) { return "fc" + std::to_string(l) + ".w"; }
std::string fc_b(int64_t l) { return "fc" + std::to_string(l) + ".b"; }
std::string stage_w(int64_t s) { return "stage" + std::to_string(s) + ".w"; }
std::string stage_b(int64_t s) { return "stage" + std::to_string(s) + ".b"; }

void init_span(std::span<double> w, RngStream& rng, double scale) {
  for (double& v : w) v = rng.gaussian(0.0, scale);
}

}  // namespace

ParamVector mlp_init(const MlpSpec& spec, RngStream& rng) {
  if (spec.widths.size() < 2) throw std::invalid_argument("mlp_init: need at least two widths");
  ParamVector p;
  for (int64_t l = 0; l < spec.layers(); ++l) {
    p.add(fc_w(l), {spec.widths[l + 1], spec.widths[l]});
    p.add(fc_b(l), {spec.widths[l + 1]});
  }
  for (int64_t l = 0; l < spec.layers(); ++l)
    init_span(p.seg(fc_w(l)), rng, 1.0 / std::sqrt(static_cast<double>(spec.widths[l])));
  return p;
}

Tensor mlp_forward(const MlpSpec& spec, const ParamVector& params, const Tensor& x,
                   MlpCache* cache) {
  if (x.ndim() != 2 || x.shape[1] != spec.input_dim())
    throw std::invalid_argument("mlp_forward: input shape mismatch");
  const int64_t layers = spec.layers();
  Tensor h = x;
  if (cache) {
    *cache = MlpCache{};
    cache->input = x;
  }
  for (int64_t l = 0; l < layers; ++l) {
    Tensor a = affine_forward(h, params.seg(fc_w(l)), params.seg(fc_b(l)), spec.widths[l],
                              spec.widths[l + 1]);
    const bool last = (l == layers - 1);
    Tensor out = last ? a : act_forward(spec.act, a);
    if (cache) {
      cache->pre.push_back(a);
      cache->post.push_back(out);
    }
    h = std::move(out);
  }
  if (cache) cache->valid = true;
  return h;
}

void mlp_backward(const MlpSpec& spec, const ParamVector& params, const MlpCache& cache,
                  const Tensor& grad_out, ParamVector* grad_params, Tensor* grad_input) {
  if (!cache.valid) throw InvalidStateError("mlp_backward: stale or missing cache");
  const int64_t layers = spec.layers();
  Tensor g = grad_out;  // grad wrt layer output
  for (int64_t l = layers - 1; l >= 0; --l) {
    if (l != layers - 1) g = act_backward(spec.act, cache.pre[static_cast<size_t>(l)], g);
    const Tensor& in = l == 0 ? cache.input : cache.post[static_cast<size_t>(l - 1)];
    Tensor gx;
    const bool need_input = (l > 0) || (grad_input != nullptr);
    if (grad_params) {
      affine_backward(in, params.seg(fc_w(l)), g, spec.widths[l], spec.widths[l + 1],
                      grad_params->seg(fc_w(l)), grad_params->seg(fc_b(l)),
                      need_input ? &gx : nullptr);
    } else {
      // still need the input gradient; use scratch parameter buffers
      std::vector<double> ww(static_cast<size_t>(spec.widths[l + 1] * spec.widths[l]), 0.0);
      std::vector<double> bb(static_cast<size_t>(spec.widths[l + 1]), 0.0);
      affine_backward(in, params.seg(fc_w(l)), g, spec.widths[l], spec.widths[l + 1],
                      std::span<double>(ww), std::span<double>(bb), need_input ? &gx : nullptr);
    }
    if (need_input) g = std::move(gx);
  }
  if (grad_input) *grad_input = std::move(g);
}

Tensor mlp_penultimate(const MlpCache& cache) {
  if (!cache.valid || cache.post.size() < 2)
    throw InvalidStateError("mlp_penultimate: cache has no hidden layer");
  return cache.post[cache.post.size() - 2];
}

double mlp_grad_penalty(const MlpSpec& spec, const ParamVector& params, const Tensor& x,
                        double scale, ParamVector* grad_params) {
  if (spec.output_dim() != 1)
    throw std::invalid_argument("mlp_grad_penalty: scalar-output network required");
  const int64_t layers = spec.layers();
  const int64_t batch = x.shape[0];
  double penalty_sum = 0.0;

  // Per-sample double backward. L = number of layers; widths w0..wL.
  for (int64_t s = 0; s < batch; ++s) {
    // forward
    std::vector<std::vector<double>> h(static_cast<size_t>(layers + 1));
    std::vector<std::vector<double>> a(static_cast<size_t>(layers + 1));
    h[0].assign(x.data.begin() + s * spec.input_dim(),
                x.data.begin() + (s + 1) * spec.input_dim());
    for (int64_t l = 1; l <= layers; ++l) {
      const auto w = params.seg(fc_w(l - 1));
      const auto b = params.seg(fc_b(l - 1));
      const int64_t in = spec.widths[l - 1], out = spec.widths[l];
      a[static_cast<size_t>(l)].assign(static_cast<size_t>(out), 0.0);
      for (int64_t o = 0; o < out; ++o) {
        double acc = b[static_cast<size_t>(o)];
        for (int64_t k = 0; k < in; ++k) acc += w[static_cast<size_t>(o * in + k)] * h[static_cast<size_t>(l - 1)][static_cast<size_t>(k)];
        a[static_cast<size_t>(l)][static_cast<size_t>(o)] = acc;
      }
      if (l < layers) {
        h[static_cast<size_t>(l)].resize(static_cast<size_t>(out));
        for (int64_t o = 0; o < out; ++o)
          h[static_cast<size_t>(l)][static_cast<size_t>(o)] =
              act_value(spec.act, a[static_cast<size_t>(l)][static_cast<size_t>(o)]);
      }
    }

    // input-gradient pass: g_L = 1; hhat_l = W_{l+1}^T g_{l+1}; g_l = act'(a_l) .* hhat_l
    std::vector<std::vector<double>> g(static_cast<size_t>(layers + 1));
    std::vector<std::vector<double>> hhat(static_cast<size_t>(layers));
    g[static_cast<size_t>(layers)] = {1.0};
    for (int64_t l = layers - 1; l >= 0; --l) {
      const auto w = params.seg(fc_w(l));
      const int64_t in = spec.widths[l], out = spec.widths[l + 1];
      hhat[static_cast<size_t>(l)].assign(static_cast<size_t>(in), 0.0);
      for (int64_t o = 0; o < out; ++o) {
        const double gv = g[static_cast<size_t>(l + 1)][static_cast<size_t>(o)];
        if (gv == 0.0) continue;
        for (int64_t k = 0; k < in; ++k)
          hhat[static_cast<size_t>(l)][static_cast<size_t>(k)] += w[static_cast<size_t>(o * in + k)] * gv;
      }
      if (l > 0) {
        g[static_cast<size_t>(l)].resize(static_cast<size_t>(in));
        for (int64_t k = 0; k < in; ++k)
          g[static_cast<size_t>(l)][static_cast<size_t>(k)] =
              act_deriv(spec.act, a[static_cast<size_t>(l)][static_cast<size_t>(k)]) *
              hhat[static_cast<size_t>(l)][static_cast<size_t>(k)];
      }
    }
    const std::vector<double>& u = hhat[0];  // grad of output wrt input
    double norm2 = 0.0;
    for (double v : u) norm2 += v * v;
    const double norm = std::sqrt(norm2);
    const double pen = (norm - 1.0) * (norm - 1.0);
    penalty_sum += pen;
    if (!grad_params) continue;

    // c = d pen / d u
    std::vector<double> c(u.size(), 0.0);
    if (norm > 1e-12) {
      const double f = 2.0 * (norm - 1.0) / norm;
      for (size_t i = 0; i < u.size(); ++i) c[i] = f * u[i];
    }
    const double coeff = scale / static_cast<double>(batch);

    // Adjoint walk back up the input-gradient chain: m = dq/dg_l with q = c^T u.
    // r_l collects dq/da_l contributions from the act'(a_l) factors.
    std::vector<std::vector<double>> r(static_cast<size_t>(layers + 1));
    for (int64_t l = 1; l <= layers; ++l)
      r[static_cast<size_t>(l)].assign(static_cast<size_t>(spec.widths[l]), 0.0);

    // u = W_1^T g_1 (layer index 0 in storage)
    {
      const int64_t in = spec.widths[0], out = spec.widths[1];
      auto gw = grad_params->seg(fc_w(0));
      for (int64_t o = 0; o < out; ++o) {
        const double gv = g[1][static_cast<size_t>(o)];
        if (gv == 0.0) continue;
        for (int64_t k = 0; k < in; ++k)
          gw[static_cast<size_t>(o * in + k)] += coeff * gv * c[static_cast<size_t>(k)];
      }
    }
    std::vector<double> m(static_cast<size_t>(spec.widths[1]), 0.0);  // dq/dg_1
    {
      const auto w = params.seg(fc_w(0));
      const int64_t in = spec.widths[0], out = spec.widths[1];
      for (int64_t o = 0; o < out; ++o) {
        double acc = 0.0;
        for (int64_t k = 0; k < in; ++k) acc += w[static_cast<size_t>(o * in + k)] * c[static_cast<size_t>(k)];
        m[static_cast<size_t>(o)] = acc;
      }
    }
    for (int64_t l = 1; l < layers; ++l) {
      const int64_t wl = spec.widths[l], wn = spec.widths[l + 1];
      // g_l = act'(a_l) .* hhat_l
      std::vector<double> mh(static_cast<size_t>(wl), 0.0);  // dq/dhhat_l
      for (int64_t k = 0; k < wl; ++k) {
        const double d1 = act_deriv(spec.act, a[static_cast<size_t>(l)][static_cast<size_t>(k)]);
        const double d2 = act_deriv2(spec.act, a[static_cast<size_t>(l)][static_cast<size_t>(k)]);
        mh[static_cast<size_t>(k)] = m[static_cast<size_t>(k)] * d1;
        r[static_cast<size_t>(l)][static_cast<size_t>(k)] +=
            m[static_cast<size_t>(k)] * hhat[static_cast<size_t>(l)][static_cast<size_t>(k)] * d2;
      }
      // hhat_l = W_{l+1}^T g_{l+1}
      auto gw = grad_params->seg(fc_w(l));
      const auto w = params.seg(fc_w(l));
      std::vector<double> mnext(static_cast<size_t>(wn), 0.0);
      for (int64_t o = 0; o < wn; ++o) {
        const double gv = g[static_cast<size_t>(l + 1)][static_cast<size_t>(o)];
        double acc = 0.0;
        for (int64_t k = 0; k < wl; ++k) {
          gw[static_cast<size_t>(o * wl + k)] += coeff * gv * mh[static_cast<size_t>(k)];
          acc += w[static_cast<size_t>(o * wl + k)] * mh[static_cast<size_t>(k)];
        }
        mnext[static_cast<size_t>(o)] = acc;
      }
      m = std::move(mnext);
    }

    // Push the r_l contributions through the forward graph.
    std::vector<double> da;  // dq/da_l being propagated downward
    for (int64_t l = layers; l >= 1; --l) {
      if (l == layers)
        da = r[static_cast<size_t>(l)];
      else {
        for (int64_t k = 0; k < spec.widths[l]; ++k)
          da[static_cast<size_t>(k)] =
              da[static_cast<size_t>(k)] * act_deriv(spec.act, a[static_cast<size_t>(l)][static_cast<size_t>(k)]) +
              r[static_cast<size_t>(l)][static_cast<size_t>(k)];
      }
      const int64_t in = spec.widths[l - 1], out = spec.widths[l];
      auto gw = grad_params->seg(fc_w(l - 1));
      auto gb = grad_params->seg(fc_b(l - 1));
      const auto w = params.seg(fc_w(l - 1));
      std::vector<double> dh(static_cast<size_t>(in), 0.0);
      for (int64_t o = 0; o < out; ++o) {
        const double dv = da[static_cast<size_t>(o)];
        if (dv == 0.0) continue;
        gb[static_cast<size_t>(o)] += coeff * dv;
        for (int64_t k = 0; k < in; ++k) {
          gw[static_cast<size_t>(o * in + k)] += coeff * dv * h[static_cast<size_t>(l - 1)][static_cast<size_t>(k)];
          dh[static_cast<size_t>(k)] += w[static_cast<size_t>(o * in + k)] * dv;
        }
      }
      da = std::move(dh);  // becomes dq/dh_{l-1}; folded into da at next step
    }
  }
  return penalty_sum / static_cast<double>(batch);
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

Tensor inject_noise(const Tensor& feature_map, const NoiseConfig& cfg, RngStream& rng) {
  if (cfg.sigma_noise < 0.0) throw std::invalid_argument("inject_noise: negative sigma_noise");
  if (cfg.sigma_noise == 0.0) return feature_map;
  Tensor out = feature_map;
  for (double& v : out.data) v += rng.gaussian(0.0, cfg.sigma_noise);
  return out;
}

ParamVector generator_init(const GeneratorSpec& spec, RngStream& rng) {
  if (spec.channels.size() < 2)
    throw std::invalid_argument("generator_init: need base channels plus at least one stage");
  ParamVector p;
  p.add("embed", {spec.num_classes, spec.embed_dim});
  const int64_t base = spec.channels[0] * spec.base_h * spec.base_w;
  p.add("fc0.w", {base, spec.input_dim()});
  p.add("fc0.b", {base});
  for (int64_t s = 1; s <= spec.stages(); ++s) {
    const int64_t h = spec.base_h << s, w = spec.base_w << s;
    p.add(stage_w(s), {spec.channels[static_cast<size_t>(s)], spec.channels[static_cast<size_t>(s - 1)]});
    // per-pixel bias map: spatial detail below the upsampled block size
    p.add(stage_b(s), {spec.channels[static_cast<size_t>(s)], h, w});
  }
  p.add("head.w", {1, spec.channels.back()});
  p.add("head.b", {1, spec.out_h(), spec.out_w()});

  init_span(p.seg("embed"), rng, 0.5);
  init_span(p.seg("fc0.w"), rng, 1.0 / std::sqrt(static_cast<double>(spec.input_dim())));
  for (int64_t s = 1; s <= spec.stages(); ++s)
    init_span(p.seg(stage_w(s)), rng,
              1.0 / std::sqrt(static_cast<double>(spec.channels[static_cast<size_t>(s - 1)])));
  init_span(p.seg("head.w"), rng, 1.0 / std::sqrt(static_cast<double>(spec.channels.back())));
  // dark canvas: sparse image data is mostly background, so start there
  for (double& v : p.seg("head.b")) v += spec.head_bias_init;
  return p;
}

Tensor generator_forward(const GeneratorSpec& spec, const ParamVector& params, const Tensor& z,
                         const std::vector<int>* labels, const NoiseConfig& cfg, RngStream& rng,
                         GenCache* cache) {
  if (z.ndim() != 2 || z.shape[1] != spec.latent_dim)
    throw std::invalid_argument("generator_forward: latent shape mismatch");
  const int64_t b = z.shape[0];
  if (labels && static_cast<int64_t>(labels->size()) != b)
    throw std::invalid_argument("generator_forward: label count mismatch");

  // Assemble [z | embed(y)] rows; unconditional path uses a zero embedding.
  Tensor in = Tensor::zeros({b, spec.input_dim()});
  const auto embed = params.seg("embed");
  for (int64_t i = 0; i < b; ++i) {
    double* row = in.data.data() + i * spec.input_dim();
    for (int64_t j = 0; j < spec.latent_dim; ++j) row[j] = z.data[i * spec.latent_dim + j];
    if (labels) {
      const int y = (*labels)[static_cast<size_t>(i)];
      if (y < 0 || y >= spec.num_classes)
        throw std::invalid_argument("generator_forward: label out of range");
      for (int64_t j = 0; j < spec.embed_dim; ++j)
        row[spec.latent_dim + j] = embed[static_cast<size_t>(y * spec.embed_dim + j)];
    }
  }

  GenCache local;
  GenCache& c = cache ? *cache : local;
  c = GenCache{};
  c.input = in;
  if (labels) c.labels = *labels;

  const int64_t c0 = spec.channels[0];
  const int64_t base = c0 * spec.base_h * spec.base_w;
  Tensor fc = affine_forward(in, params.seg("fc0.w"), params.seg("fc0.b"), spec.input_dim(), base);
  c.fc_pre = fc;
  Tensor feat = Tensor({b, c0, spec.base_h, spec.base_w}, act_forward(spec.act, fc).data);

  for (int64_t s = 1; s <= spec.stages(); ++s) {
    Tensor up = upsample2x_forward(feat);
    c.up_in.push_back(up);
    Tensor mixed = channel_mix_spatial_forward(up, params.seg(stage_w(s)), params.seg(stage_b(s)),
                                               spec.channels[static_cast<size_t>(s - 1)],
                                               spec.channels[static_cast<size_t>(s)]);
    Tensor noisy = inject_noise(mixed, cfg, rng);
    c.mix_pre.push_back(noisy);
    feat = act_forward(spec.act, noisy);
  }

  Tensor head = channel_mix_spatial_forward(feat, params.seg("head.w"), params.seg("head.b"),
                                            spec.channels.back(), 1);
  c.head_pre = head;
  Tensor img = Tensor({b, spec.out_h(), spec.out_w()}, act_forward(Activation::Tanh, head).data);
  c.image = img;
  c.valid = true;
  return img;
}

void generator_backward(const GeneratorSpec& spec, const ParamVector& params,
                        const GenCache& cache, const Tensor& grad_image,
                        ParamVector* grad_params, Tensor* grad_z) {
  if (!cache.valid) throw InvalidStateError("generator_backward: stale or missing cache");
  const int64_t b = cache.input.shape[0];
  if (grad_image.shape != cache.image.shape)
    throw std::invalid_argument("generator_backward: image gradient shape mismatch");

  // through the output tanh
  Tensor g = Tensor({b, 1, spec.out_h(), spec.out_w()},
                    act_backward(Activation::Tanh, cache.head_pre,
                                 Tensor(cache.head_pre.shape, grad_image.data))
                        .data);

  ParamVector scratch;
  ParamVector& gp = grad_params ? *grad_params : scratch;
  if (!grad_params) gp = ParamVector::like(params);

  Tensor gfeat;
  {
    const Tensor post = act_forward(spec.act, cache.mix_pre.back());
    channel_mix_spatial_backward(post, params.seg("head.w"), g, spec.channels.back(), 1,
                                 gp.seg("head.w"), gp.seg("head.b"), &gfeat);
  }

  for (int64_t s = spec.stages(); s >= 1; --s) {
    // through the stage activation (noise is an additive constant in the cache)
    gfeat = act_backward(spec.act, cache.mix_pre[static_cast<size_t>(s - 1)], gfeat);
    Tensor gup;
    channel_mix_spatial_backward(cache.up_in[static_cast<size_t>(s - 1)], params.seg(stage_w(s)),
                                 gfeat, spec.channels[static_cast<size_t>(s - 1)],
                                 spec.channels[static_cast<size_t>(s)], gp.seg(stage_w(s)),
                                 gp.seg(stage_b(s)), &gup);
    gfeat = upsample2x_backward(gup);
  }

  // base feature map back to the fc layer
  const int64_t base = spec.channels[0] * spec.base_h * spec.base_w;
  Tensor gfc = act_backward(spec.act, cache.fc_pre, Tensor({b, base}, gfeat.data));
  Tensor gin;
  affine_backward(cache.input, params.seg("fc0.w"), gfc, spec.input_dim(), base, gp.seg("fc0.w"),
                  gp.seg("fc0.b"), &gin);

  if (!cache.labels.empty()) {
    auto gembed = gp.seg("embed");
    for (int64_t i = 0; i < b; ++i) {
      const int y = cache.labels[static_cast<size_t>(i)];
      for (int64_t j = 0; j < spec.embed_dim; ++j)
        gembed[static_cast<size_t>(y * spec.embed_dim + j)] +=
            gin.data[i * spec.input_dim() + spec.latent_dim + j];
    }
  }
  if (grad_z) {
    *grad_z = Tensor::zeros({b, spec.latent_dim});
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < spec.latent_dim; ++j)
        grad_z->data[i * spec.latent_dim + j] = gin.data[i * spec.input_dim() + j];
  }
}

}  // namespace dpgen
