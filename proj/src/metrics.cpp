#include "dpgen/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dpgen/losses.hpp"

namespace dpgen {

Tensor extract_features(const Tensor& samples, FeatureExtractor extractor,
                        const MlpSpec* cls_spec, const ParamVector* cls_params) {
  const Tensor flat = flatten_images(samples);
  if (extractor == FeatureExtractor::RawPixels) return flat;
  if (!cls_spec || !cls_params)
    throw std::invalid_argument("extract_features: classifier required for penultimate features");
  MlpCache cache;
  mlp_forward(*cls_spec, *cls_params, flat, &cache);
  return mlp_penultimate(cache);
}

FeatureStats feature_stats(const Tensor& features) {
  if (features.ndim() != 2) throw std::invalid_argument("feature_stats: expected [N,F]");
  const int64_t n = features.shape[0], f = features.shape[1];
  if (n < 2) throw std::invalid_argument("feature_stats: need at least two samples");
  FeatureStats st;
  st.mean.assign(static_cast<size_t>(f), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < f; ++j) st.mean[static_cast<size_t>(j)] += features.data[i * f + j];
  for (double& m : st.mean) m /= static_cast<double>(n);
  st.cov = Tensor::zeros({f, f});
  for (int64_t i = 0; i < n; ++i) {
    const double* row = features.data.data() + i * f;
    for (int64_t a = 0; a < f; ++a) {
      const double da = row[a] - st.mean[static_cast<size_t>(a)];
      for (int64_t b = a; b < f; ++b) {
        const double db = row[b] - st.mean[static_cast<size_t>(b)];
        st.cov.data[a * f + b] += da * db;
      }
    }
  }
  const double denom = static_cast<double>(n - 1);
  for (int64_t a = 0; a < f; ++a)
    for (int64_t b = a; b < f; ++b) {
      const double v = st.cov.data[a * f + b] / denom;
      st.cov.data[a * f + b] = v;
      st.cov.data[b * f + a] = v;
    }
  return st;
}

FeatureStats feature_stats(const Tensor& samples, FeatureExtractor extractor,
                           const MlpSpec* cls_spec, const ParamVector* cls_params) {
  return feature_stats(extract_features(samples, extractor, cls_spec, cls_params));
}

std::vector<double> symmetric_eigenvalues(const Tensor& m, Tensor* eigenvectors) {
  if (m.ndim() != 2 || m.shape[0] != m.shape[1])
    throw std::invalid_argument("symmetric_eigenvalues: square matrix required");
  const int64_t n = m.shape[0];
  Tensor a = m;
  Tensor v = Tensor::zeros({n, n});
  for (int64_t i = 0; i < n; ++i) v.data[i * n + i] = 1.0;

  auto off_diag = [&]() {
    double s = 0.0;
    for (int64_t p = 0; p < n; ++p)
      for (int64_t q = p + 1; q < n; ++q) s += a.data[p * n + q] * a.data[p * n + q];
    return s;
  };

  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps && off_diag() > 1e-24; ++sweep) {
    for (int64_t p = 0; p < n - 1; ++p)
      for (int64_t q = p + 1; q < n; ++q) {
        const double apq = a.data[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a.data[p * n + p], aqq = a.data[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int64_t k = 0; k < n; ++k) {
          const double akp = a.data[k * n + p], akq = a.data[k * n + q];
          a.data[k * n + p] = c * akp - s * akq;
          a.data[k * n + q] = s * akp + c * akq;
        }
        for (int64_t k = 0; k < n; ++k) {
          const double apk = a.data[p * n + k], aqk = a.data[q * n + k];
          a.data[p * n + k] = c * apk - s * aqk;
          a.data[q * n + k] = s * apk + c * aqk;
        }
        for (int64_t k = 0; k < n; ++k) {
          const double vkp = v.data[k * n + p], vkq = v.data[k * n + q];
          v.data[k * n + p] = c * vkp - s * vkq;
          v.data[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<double> eig(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) eig[static_cast<size_t>(i)] = a.data[i * n + i];
  if (eigenvectors) *eigenvectors = v;
  return eig;
}

namespace {

// Symmetric PSD square root via eigendecomposition.
Tensor sqrtm_psd(const Tensor& m, const char* what) {
  const int64_t n = m.shape[0];
  Tensor vecs;
  std::vector<double> eig = symmetric_eigenvalues(m, &vecs);
  for (double& e : eig) {
    if (e < -1e-6) throw NumericError(std::string(what) + ": negative eigenvalue " + std::to_string(e));
    e = e > 0.0 ? std::sqrt(e) : 0.0;
  }
  Tensor out = Tensor::zeros({n, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < n; ++k)
        s += vecs.data[i * n + k] * eig[static_cast<size_t>(k)] * vecs.data[j * n + k];
      out.data[i * n + j] = s;
    }
  return out;
}

Tensor matmul_square(const Tensor& a, const Tensor& b) {
  const int64_t n = a.shape[0];
  Tensor out = Tensor::zeros({n, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t k = 0; k < n; ++k) {
      const double av = a.data[i * n + k];
      if (av == 0.0) continue;
      for (int64_t j = 0; j < n; ++j) out.data[i * n + j] += av * b.data[k * n + j];
    }
  return out;
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("frechet_distance: dim mismatch");
  const int64_t n = a.cov.shape[0];

  double mean_term = 0.0;
  for (size_t i = 0; i < a.mean.size(); ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_term += d * d;
  }

  // tr((Sa Sb)^1/2) = tr((A Sb A)^1/2) with A = Sa^1/2; the inner product is
  // symmetric PSD so its eigenvalues are real.
  Tensor sqrt_a = sqrtm_psd(a.cov, "frechet_distance: covariance a");
  Tensor inner = matmul_square(matmul_square(sqrt_a, b.cov), sqrt_a);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      const double s = 0.5 * (inner.data[i * n + j] + inner.data[j * n + i]);
      inner.data[i * n + j] = s;
      inner.data[j * n + i] = s;
    }
  std::vector<double> eig = symmetric_eigenvalues(inner);
  double tr_sqrt = 0.0;
  for (double e : eig) {
    if (e < -1e-6) throw NumericError("frechet_distance: product eigenvalue " + std::to_string(e));
    tr_sqrt += e > 0.0 ? std::sqrt(e) : 0.0;
  }

  double tr_a = 0.0, tr_b = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    tr_a += a.cov.data[i * n + i];
    tr_b += b.cov.data[i * n + i];
  }
  return std::max(0.0, mean_term + tr_a + tr_b - 2.0 * tr_sqrt);
}

double inception_style_score(const Tensor& samples, const MlpSpec& cls_spec,
                             const ParamVector& cls_params) {
  const Tensor flat = flatten_images(samples);
  const int64_t n = flat.shape[0];
  if (n < 1) throw std::invalid_argument("inception_style_score: need at least one sample");
  Tensor logits = mlp_forward(cls_spec, cls_params, flat);
  const int64_t k = logits.shape[1];

  Tensor probs = Tensor::zeros({n, k});
  std::vector<double> marginal(static_cast<size_t>(k), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const double* row = logits.data.data() + i * k;
    double m = row[0];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
    for (int64_t j = 0; j < k; ++j) {
      const double p = std::exp(row[j] - m) / z;
      probs.data[i * k + j] = p;
      marginal[static_cast<size_t>(j)] += p / static_cast<double>(n);
    }
  }
  double kl_sum = 0.0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < k; ++j) {
      const double p = probs.data[i * k + j];
      if (p > 1e-300) kl_sum += p * (std::log(p) - std::log(std::max(marginal[static_cast<size_t>(j)], 1e-300)));
    }
  return std::exp(kl_sum / static_cast<double>(n));
}

namespace {

MlpSpec probe_spec(ProbeKind kind, int64_t input_dim, int num_classes) {
  if (kind == ProbeKind::Mlp) return MlpSpec{{input_dim, 64, num_classes}, Activation::Tanh};
  // "cnn-like": the channel-mix stack is emulated with two narrow layers
  return MlpSpec{{input_dim, 32, 32, num_classes}, Activation::Tanh};
}

}  // namespace

double train_probe_accuracy(const Tensor& train_images, const std::vector<int>& train_labels,
                            const LabeledDataset& test, int num_classes, ProbeKind probe,
                            uint64_t seed) {
  const Tensor xtrain = flatten_images(train_images);
  const int64_t n = xtrain.shape[0];
  if (n == 0 || train_labels.size() != static_cast<size_t>(n))
    throw std::invalid_argument("train_probe_accuracy: bad training set");

  const MlpSpec spec = probe_spec(probe, xtrain.shape[1], num_classes);
  RngStream init_rng = RngStream(seed).substream("probe_init");
  RngStream batch_rng = RngStream(seed).substream("probe_batches");
  ParamVector params = mlp_init(spec, init_rng);

  const int64_t batch = std::min<int64_t>(32, n);
  const int64_t steps = 400;
  const double lr = 0.1;
  for (int64_t s = 0; s < steps; ++s) {
    Tensor xb = Tensor::zeros({batch, xtrain.shape[1]});
    std::vector<int> yb(static_cast<size_t>(batch));
    for (int64_t i = 0; i < batch; ++i) {
      const int64_t pick = batch_rng.uniform_int(n);
      std::copy(xtrain.data.begin() + pick * xtrain.shape[1],
                xtrain.data.begin() + (pick + 1) * xtrain.shape[1],
                xb.data.begin() + i * xtrain.shape[1]);
      yb[static_cast<size_t>(i)] = train_labels[static_cast<size_t>(pick)];
    }
    ClassifierLoss cl = classifier_xent(spec, params, xb, yb);
    axpy(params, -lr, cl.grad_params);
  }

  const Tensor xtest = flatten_images(test.images);
  Tensor logits = mlp_forward(spec, params, xtest);
  int64_t correct = 0;
  for (int64_t i = 0; i < xtest.shape[0]; ++i) {
    const double* row = logits.data.data() + i * num_classes;
    int best = 0;
    for (int j = 1; j < num_classes; ++j)
      if (row[j] > row[best]) best = j;
    if (best == test.labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(xtest.shape[0]);
}

GeneratedBatch sample_generator(const GeneratorSpec& gen_spec, const ParamVector& gen_params,
                                const NoiseConfig& cfg, int64_t count, uint64_t seed) {
  GeneratedBatch out;
  out.labels.resize(static_cast<size_t>(count));
  if (count == 0) {
    out.images = Tensor{};
    return out;
  }
  RngStream latent = RngStream(seed).substream("sample_latent");
  RngStream labels_rng = RngStream(seed).substream("sample_labels");
  RngStream inject = RngStream(seed).substream("sample_inject");
  Tensor z = gaussian_sample({count, gen_spec.latent_dim}, 0.0, 1.0, latent);
  for (auto& y : out.labels) y = static_cast<int>(labels_rng.uniform_int(gen_spec.num_classes));
  out.images = generator_forward(gen_spec, gen_params, z, &out.labels, cfg, inject);
  return out;
}

Gen2RealResult gen2real(const GeneratorSpec& gen_spec, const ParamVector& gen_params,
                        const NoiseConfig& cfg, int64_t train_size, const LabeledDataset& real_test,
                        uint64_t seed) {
  GeneratedBatch gb = sample_generator(gen_spec, gen_params, cfg, train_size, seed);
  Gen2RealResult out;
  out.mlp = train_probe_accuracy(gb.images, gb.labels, real_test,
                                 static_cast<int>(gen_spec.num_classes), ProbeKind::Mlp, seed);
  out.cnn = train_probe_accuracy(gb.images, gb.labels, real_test,
                                 static_cast<int>(gen_spec.num_classes), ProbeKind::CnnLike, seed);
  return out;
}

double sample_diversity(const GeneratorSpec& gen_spec, const ParamVector& gen_params,
                        const NoiseConfig& cfg, int64_t count, uint64_t seed) {
  RngStream latent = RngStream(seed).substream("div_latent");
  RngStream labels_rng = RngStream(seed).substream("div_labels");
  RngStream inject = RngStream(seed).substream("div_inject");
  Tensor z = gaussian_sample({count, gen_spec.latent_dim}, 0.0, 1.0, latent);
  std::vector<int> labels(static_cast<size_t>(count));
  for (auto& y : labels) y = static_cast<int>(labels_rng.uniform_int(gen_spec.num_classes));
  Tensor images = generator_forward(gen_spec, gen_params, z, &labels, cfg, inject);
  const int64_t hw = gen_spec.out_h() * gen_spec.out_w();
  double total = 0.0;
  int64_t pairs = 0;
  for (int64_t i = 0; i < count; ++i)
    for (int64_t j = i + 1; j < count; ++j, ++pairs) {
      double s = 0.0;
      for (int64_t p = 0; p < hw; ++p) {
        const double d = images.data[i * hw + p] - images.data[j * hw + p];
        s += d * d;
      }
      total += std::sqrt(s);
    }
  return pairs > 0 ? total / static_cast<double>(pairs) : 0.0;
}

FeatureClassifier train_feature_classifier(const LabeledDataset& train, int64_t hidden,
                                           int64_t steps, uint64_t seed) {
  FeatureClassifier fc;
  const int64_t input = train.height() * train.width();
  fc.spec = MlpSpec{{input, hidden, train.num_classes}, Activation::Tanh};
  RngStream init_rng = RngStream(seed).substream("feat_init");
  RngStream batch_rng = RngStream(seed).substream("feat_batches");
  fc.params = mlp_init(fc.spec, init_rng);
  const Tensor x = flatten_images(train.images);
  const int64_t n = x.shape[0];
  const int64_t batch = std::min<int64_t>(32, n);
  for (int64_t s = 0; s < steps; ++s) {
    Tensor xb = Tensor::zeros({batch, input});
    std::vector<int> yb(static_cast<size_t>(batch));
    for (int64_t i = 0; i < batch; ++i) {
      const int64_t pick = batch_rng.uniform_int(n);
      std::copy(x.data.begin() + pick * input, x.data.begin() + (pick + 1) * input,
                xb.data.begin() + i * input);
      yb[static_cast<size_t>(i)] = train.labels[static_cast<size_t>(pick)];
    }
    ClassifierLoss cl = classifier_xent(fc.spec, fc.params, xb, yb);
    axpy(fc.params, -0.1, cl.grad_params);
  }
  return fc;
}

}  // namespace dpgen
