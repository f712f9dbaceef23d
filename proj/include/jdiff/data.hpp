#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "jdiff/rng.hpp"
#include "jdiff/tensor.hpp"

namespace jdiff {

// Labeled u8 images, CHW per sample.
struct ImageSet {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<uint8_t> pixels;
  std::vector<uint8_t> labels;

  const uint8_t* image(int i) const { return pixels.data() + static_cast<size_t>(i) * c * h * w; }
  int n_classes() const;
};

// IDX (MNIST distribution format): big-endian, magic 0x803 for images and
// 0x801 for labels.
ImageSet load_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary batches: 3073-byte records, 1 label byte + 3x32x32 CHW.
ImageSet load_cifar_binary(const std::string& path);
ImageSet load_cifar_binary(const std::vector<std::string>& paths);

// Floating-point image in [0,255], CHW.
struct ImageF {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;
};

ImageF to_float(const ImageSet& set, int index);

enum class Resample { Nearest, Bilinear };
Resample resample_method(const std::string& name);

ImageF resample(const ImageF& img, int target_h, int target_w, Resample method);

struct ModalityDesc {
  std::string name;
  int channel_begin = 0, channel_end = 0;  // [begin, end)
  int native_h = 0, native_w = 0;

  int channels() const { return channel_end - channel_begin; }
};

struct PackedLayout {
  std::vector<ModalityDesc> modalities;
  int height = 0, width = 0;

  int total_channels() const;
  const ModalityDesc& modality(const std::string& name) const;
  int modality_index(const std::string& name) const;
  void validate() const;

  std::string to_json() const;
  static PackedLayout from_json(const std::string& json);
};

// Class-matched pair assignment: A-side drawn without replacement up to
// availability then with replacement, B-side always with replacement.
struct PairingPlan {
  int n_classes = 0;
  int quota = 0;
  // pairs[k] holds quota (indexA, indexB) pairs, both labeled k.
  std::vector<std::vector<std::pair<int, int>>> pairs;

  int total() const { return n_classes * quota; }
};

PairingPlan build_pairing(const ImageSet& a, const ImageSet& b, int quota, Rng& rng);

struct PackedSample {
  Tensor image;  // [C,H,W] in [-1,1]
  int label = -1;
  int src_a = -1, src_b = -1;
};

struct PackedDataset {
  PackedLayout layout;
  Tensor data;  // [N,C,H,W] in [-1,1]
  std::vector<int> labels;
  std::vector<int> src_a, src_b;

  int size() const { return static_cast<int>(labels.size()); }
  // One sample's [1,C,H,W] view (copy).
  Tensor sample(int i) const;
  // One modality's channels of one sample, [1,c,H,W].
  Tensor modality_channels(int i, int modality) const;
};

// u8 <-> [-1,1] affine map (2v/255 - 1).
double u8_to_unit(uint8_t v);
uint8_t unit_to_u8(double x);

PackedSample pack_pair(const ImageF& a, const ImageF& b, const PackedLayout& layout, int label);

PackedDataset pack_dataset(const ImageSet& a, const ImageSet& b, const PairingPlan& plan,
                           const PackedLayout& layout, Resample method);

// Recovers the resampled per-modality source images of one packed sample.
std::vector<ImageF> unpack(const PackedDataset& ds, int index);

struct SynthPaired {
  ImageSet a;  // oriented-bar glyphs, 1 channel
  ImageSet b;  // filled discs with class-dependent radius, 1 channel
};

// Desk-scale stand-in for the two-dataset pairing: both modalities carry the
// class in trivially separable geometry, with per-sample jitter.
SynthPaired synth_paired(int n_classes, int per_class, int resolution, Rng& rng);

void save_packed(const PackedDataset& ds, const std::string& path);
PackedDataset load_packed(const std::string& path);

}  // namespace jdiff
