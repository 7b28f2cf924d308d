#pragma once

#include <cstdint>
#include <vector>

#include "dpgen/data.hpp"
#include "dpgen/models.hpp"
#include "dpgen/tensor.hpp"

namespace dpgen {

struct FeatureStats {
  std::vector<double> mean;  // length F
  Tensor cov;                // [F,F], symmetric
};

enum class FeatureExtractor { RawPixels, ClassifierPenultimate };

// Features of an image batch: flattened pixels, or the penultimate
// activations of a trained classifier.
Tensor extract_features(const Tensor& samples, FeatureExtractor extractor,
                        const MlpSpec* cls_spec = nullptr, const ParamVector* cls_params = nullptr);

// Sample mean and unbiased sample covariance; needs at least two samples.
FeatureStats feature_stats(const Tensor& features);
FeatureStats feature_stats(const Tensor& samples, FeatureExtractor extractor,
                           const MlpSpec* cls_spec = nullptr, const ParamVector* cls_params = nullptr);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)), square root taken through
// a symmetric eigendecomposition. Eigenvalues below -1e-6 raise NumericError;
// small negatives are clamped to zero.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

// exp( mean_x KL(p(y|x) || p(y)) ) under a trained classifier.
double inception_style_score(const Tensor& samples, const MlpSpec& cls_spec,
                             const ParamVector& cls_params);

// Symmetric eigendecomposition via cyclic Jacobi rotations; returns
// eigenvalues, fills eigenvectors (columns) when requested.
std::vector<double> symmetric_eigenvalues(const Tensor& m, Tensor* eigenvectors = nullptr);

enum class ProbeKind { Mlp, CnnLike };

// Trains a fresh probe on (train_images, train_labels) and reports its
// accuracy on the real test set. Pure function of its inputs and the seed.
double train_probe_accuracy(const Tensor& train_images, const std::vector<int>& train_labels,
                            const LabeledDataset& test, int num_classes, ProbeKind probe,
                            uint64_t seed);

struct Gen2RealResult {
  double mlp = 0.0;
  double cnn = 0.0;
};

// Samples a synthetic labeled training set from the generator (labels from a
// uniform prior) and evaluates both probes on the real test set.
Gen2RealResult gen2real(const GeneratorSpec& gen_spec, const ParamVector& gen_params,
                        const NoiseConfig& cfg, int64_t train_size, const LabeledDataset& real_test,
                        uint64_t seed);

// Mean pairwise L2 distance between sampled images; the diversity statistic.
double sample_diversity(const GeneratorSpec& gen_spec, const ParamVector& gen_params,
                        const NoiseConfig& cfg, int64_t count, uint64_t seed);

struct GeneratedBatch {
  Tensor images;            // [N,H,W]
  std::vector<int> labels;  // uniform prior draws
};

// Images from the generator with labels drawn from the uniform prior;
// deterministic per seed.
GeneratedBatch sample_generator(const GeneratorSpec& gen_spec, const ParamVector& gen_params,
                                const NoiseConfig& cfg, int64_t count, uint64_t seed);

// Small classifier trained on a real split; the pinned feature extractor and
// scorer used by the FD / IS metrics.
struct FeatureClassifier {
  MlpSpec spec;
  ParamVector params;
};
FeatureClassifier train_feature_classifier(const LabeledDataset& train, int64_t hidden,
                                           int64_t steps, uint64_t seed);

}  // namespace dpgen
