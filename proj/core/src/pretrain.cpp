#include "mmadapt/pretrain.hpp"

#include <cmath>
#include <numeric>

#include "mmadapt/errors.hpp"
#include "mmadapt/ops.hpp"
#include "mmadapt/optim.hpp"
#include "mmadapt/rng.hpp"

namespace mmadapt {

LabelMap binary_labels(const LabelMap& truth, Organ organ) {
  LabelMap out(truth.height, truth.width);
  for (std::size_t i = 0; i < truth.size(); ++i) out.data[i] = truth.data[i] == static_cast<int>(organ) ? 1 : 0;
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

Tensor jitter_intensity(const Tensor& image, double contrast_jitter, double offset_jitter, std::uint64_t seed) {
  if (contrast_jitter == 0.0 && offset_jitter == 0.0) return image;
  Rng rng(seed);
  const double gain = 1.0 + rng.uniform(-contrast_jitter, contrast_jitter);
  const double offset = rng.uniform(-offset_jitter, offset_jitter);
  double mean = 0.0;
  for (double v : image.values()) mean += v;
  mean /= static_cast<double>(image.size());
  Tensor out = image;
  for (auto& v : out.values()) v = mean + gain * (v - mean) + offset;
  return out;
}

PretrainResult pretrain_teacher(const std::vector<Tensor>& images, const std::vector<LabelMap>& truths, Organ organ,
                                const PretrainConfig& config, const SegNetConfig& net_config) {
  if (images.empty() || images.size() != truths.size()) {
    throw DataError("pretrain_teacher: need matching non-empty image and label lists");
  }
  if (config.batch_size == 0) throw ConfigError("pretrain_teacher: batch_size must be positive");
  SegNetConfig cfg = net_config;
  cfg.num_classes = 2;
  PretrainResult result{init_network(cfg, derive_seed(config.seed, "teacher-init"), {0, static_cast<int>(organ)}), {}};

  std::vector<LabelMap> targets;
  for (const auto& t : truths) targets.push_back(binary_labels(t, organ));

  auto params = result.net.trainable();
  AdamState adam;
  adam.lr = config.lr;
  const std::uint64_t aug_root = derive_seed(config.seed, "pretrain-augment");
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(images.size(), derive_seed(derive_seed(config.seed, "pretrain-shuffle"), epoch));
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Var> probs;
      std::vector<LabelMap> batch_targets;
      for (std::size_t i = start; i < end; ++i) {
        const Tensor img = jitter_intensity(images[order[i]], config.contrast_jitter, config.offset_jitter,
                                            derive_seed(derive_seed(aug_root, epoch), order[i]));
        probs.push_back(forward(result.net, img).probs);
        batch_targets.push_back(targets[order[i]]);
      }
      const Var loss = cross_entropy(probs, batch_targets);
      if (!std::isfinite(loss.value().item())) {
        throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      zero_grads(params);
      backward(loss);
      adam_step(params, adam);
      total += loss.value().item();
      ++batches;
    }
    result.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  return result;
}

}  // namespace mmadapt
