#include "dpgen/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "dpgen/common.hpp"

namespace dpgen {

std::vector<int64_t> LabeledDataset::class_histogram() const {
  std::vector<int64_t> hist(static_cast<size_t>(std::max(num_classes, 0)), 0);
  for (int y : labels) {
    if (y >= 0 && y < num_classes) ++hist[static_cast<size_t>(y)];
  }
  return hist;
}

Tensor LabeledDataset::image(int64_t i) const {
  const int64_t hw = height() * width();
  Tensor out = Tensor::zeros({height(), width()});
  std::copy(images.data.begin() + i * hw, images.data.begin() + (i + 1) * hw, out.data.begin());
  return out;
}

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

uint32_t read_be32(std::istream& in, size_t offset, const char* what) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (in.gcount() != 4)
    throw FormatError(std::string(what) + ": truncated at byte offset " + std::to_string(offset));
  return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
         uint32_t(buf[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw FormatError("cannot open file: " + path);
  return in;
}

}  // namespace

Tensor read_idx_images(const std::string& path) {
  std::ifstream in = open_input(path);
  const uint32_t magic = read_be32(in, 0, "idx images");
  if (magic != kImagesMagic) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08X", magic);
    throw FormatError("idx images: bad magic " + std::string(hex) + " at byte offset 0 in " + path);
  }
  const uint32_t n = read_be32(in, 4, "idx images");
  const uint32_t h = read_be32(in, 8, "idx images");
  const uint32_t w = read_be32(in, 12, "idx images");
  const uint64_t count = uint64_t(n) * h * w;
  if (count > (uint64_t(1) << 32))
    throw FormatError("idx images: dimension overflow at byte offset 4 in " + path);
  if (n == 0) return Tensor{};  // empty file: no [N,H,W] shape to carry
  std::vector<unsigned char> payload(count);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(count));
  if (static_cast<uint64_t>(in.gcount()) != count)
    throw FormatError("idx images: truncated payload at byte offset " +
                      std::to_string(16 + in.gcount()) + " in " + path);
  Tensor out = Tensor::zeros({int64_t(n), int64_t(h), int64_t(w)});
  for (size_t i = 0; i < payload.size(); ++i)
    out.data[i] = static_cast<double>(payload[i]) / 127.5 - 1.0;
  return out;
}

std::vector<int> read_idx_labels(const std::string& path) {
  std::ifstream in = open_input(path);
  const uint32_t magic = read_be32(in, 0, "idx labels");
  if (magic != kLabelsMagic) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08X", magic);
    throw FormatError("idx labels: bad magic " + std::string(hex) + " at byte offset 0 in " + path);
  }
  const uint32_t n = read_be32(in, 4, "idx labels");
  std::vector<unsigned char> payload(n);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(n));
  if (static_cast<uint64_t>(in.gcount()) != n)
    throw FormatError("idx labels: truncated payload at byte offset " +
                      std::to_string(8 + in.gcount()) + " in " + path);
  return std::vector<int>(payload.begin(), payload.end());
}

void write_idx_images(const std::string& path, const Tensor& images) {
  if (!images.shape.empty() && images.ndim() != 3)
    throw std::invalid_argument("write_idx_images: expected [N,H,W]");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.is_open()) throw FormatError("cannot open file for writing: " + path);
  const bool empty = images.shape.empty() || images.shape[0] == 0;
  write_be32(out, kImagesMagic);
  write_be32(out, empty ? 0 : static_cast<uint32_t>(images.shape[0]));
  write_be32(out, empty ? 0 : static_cast<uint32_t>(images.shape[1]));
  write_be32(out, empty ? 0 : static_cast<uint32_t>(images.shape[2]));
  for (double v : images.data) {
    const double q = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
    const unsigned char byte = static_cast<unsigned char>(std::clamp(q, 0.0, 255.0));
    out.write(reinterpret_cast<const char*>(&byte), 1);
  }
  if (!out.good()) throw FormatError("short write to " + path);
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.is_open()) throw FormatError("cannot open file for writing: " + path);
  write_be32(out, kLabelsMagic);
  write_be32(out, static_cast<uint32_t>(labels.size()));
  for (int y : labels) {
    if (y < 0 || y > 255) throw std::invalid_argument("write_idx_labels: label outside byte range");
    const unsigned char byte = static_cast<unsigned char>(y);
    out.write(reinterpret_cast<const char*>(&byte), 1);
  }
  if (!out.good()) throw FormatError("short write to " + path);
}

LabeledDataset synth_dataset(int classes, int per_class, int64_t h, int64_t w, uint64_t seed) {
  if (classes < 1 || per_class < 0) throw std::invalid_argument("synth_dataset: bad spec");
  LabeledDataset ds;
  ds.num_classes = classes;
  const int64_t n = static_cast<int64_t>(classes) * per_class;
  if (n == 0) return ds;
  ds.images = Tensor::zeros({n, h, w});
  ds.labels.resize(static_cast<size_t>(n));
  RngStream rng = RngStream(seed).substream("synth");

  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  int64_t idx = 0;
  for (int c = 0; c < classes; ++c) {
    const double angle = std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
    const double nx = std::cos(angle + std::numbers::pi / 2.0);
    const double ny = std::sin(angle + std::numbers::pi / 2.0);
    for (int s = 0; s < per_class; ++s, ++idx) {
      ds.labels[static_cast<size_t>(idx)] = c;
      // bar shifted along its normal by up to one pixel
      const double shift = (rng.uniform() * 2.0 - 1.0) * 1.0;
      double* img = ds.images.data.data() + idx * h * w;
      for (int64_t r = 0; r < h; ++r)
        for (int64_t col = 0; col < w; ++col) {
          const double d = (static_cast<double>(r) - cy) * ny + (static_cast<double>(col) - cx) * nx - shift;
          // moderate contrast keeps the task in the well-conditioned part of
          // a tanh output while staying trivially separable
          const double bar = 1.2 * std::exp(-(d * d) / 2.0) - 0.6;
          const double noisy = bar + rng.gaussian(0.0, 0.15);
          img[r * w + col] = std::clamp(noisy, -1.0, 1.0);
        }
    }
  }
  return ds;
}

}  // namespace dpgen
