#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpgen/rng.hpp"
#include "dpgen/tensor.hpp"

namespace dpgen {

struct LabeledDataset {
  Tensor images;            // [N,H,W], values in [-1,1]
  std::vector<int> labels;  // N entries in [0, num_classes)
  int num_classes = 0;

  int64_t size() const { return images.shape.empty() ? 0 : images.shape[0]; }
  int64_t height() const { return images.shape.size() == 3 ? images.shape[1] : 0; }
  int64_t width() const { return images.shape.size() == 3 ? images.shape[2] : 0; }
  std::vector<int64_t> class_histogram() const;
  Tensor image(int64_t i) const;  // [H,W] copy
};

// IDX readers: big-endian magic (0x803 images, 0x801 labels), big-endian
// dimension sizes, unsigned-byte payload. Pixels map linearly to [-1,1].
Tensor read_idx_images(const std::string& path);
std::vector<int> read_idx_labels(const std::string& path);

void write_idx_images(const std::string& path, const Tensor& images);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

// Class-conditional oriented-bar patterns with pixel noise; deterministic per
// seed and linearly separable enough for a centroid classifier.
LabeledDataset synth_dataset(int classes, int per_class, int64_t h, int64_t w, uint64_t seed);

}  // namespace dpgen
