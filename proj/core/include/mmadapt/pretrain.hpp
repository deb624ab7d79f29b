#pragma once

#include <cstdint>
#include <vector>

#include "mmadapt/segnet.hpp"
#include "mmadapt/synthbench.hpp"

namespace mmadapt {

struct PretrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 4;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  // Per-sample random contrast gain in [1 - j, 1 + j] around the image mean; 0 disables.
  double contrast_jitter = 0.4;
  // Per-sample random intensity offset in [-j, j].
  double offset_jitter = 0.1;
};

struct PretrainResult {
  SegNet net;
  std::vector<double> epoch_loss;
};

// Binary (background vs `organ`) labels from a multi-organ ground truth.
LabelMap binary_labels(const LabelMap& truth, Organ organ);

// Supervised cross-entropy training of a single-organ teacher with Adam.
PretrainResult pretrain_teacher(const std::vector<Tensor>& images, const std::vector<LabelMap>& truths, Organ organ,
                                const PretrainConfig& config, const SegNetConfig& net_config = {});

// Deterministic contrast/offset augmentation of one training image.
Tensor jitter_intensity(const Tensor& image, double contrast_jitter, double offset_jitter, std::uint64_t seed);

// Fisher-Yates permutation of [0, n) drawn from `seed`.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace mmadapt
