#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mmadapt/autograd.hpp"
#include "mmadapt/tensor.hpp"

namespace mmadapt {

struct SegNetConfig {
  std::size_t in_channels = 1;
  std::size_t base_channels = 8;
  std::size_t encoder_blocks = 4;
  std::size_t num_classes = 2;
  std::size_t aux_decoders = 4;
  double dropout_rate = 0.5;
  std::size_t proj_channels = 32;

  friend bool operator==(const SegNetConfig&, const SegNetConfig&) = default;
};

// Distillation and prototype taps.
struct FeatureTaps {
  Var low;       // output of the last encoder block
  Var high;      // output of the last convolution before the classifier, before its ReLU
  Var decision;  // same layer as `high`: the second-to-last convolution of the network
};

struct ForwardResult {
  Var logits;
  Var probs;
  FeatureTaps taps;
};

struct AuxForwardResult {
  Var main_logits;
  Var main_probs;
  std::vector<Var> aux_probs;
  FeatureTaps taps;
};

// Small encoder-decoder: four conv3x3+ReLU encoder blocks (stride 2 from block 2 on),
// a bilinear-upsampling decoder with additive skips, a full-resolution feature conv and
// a 1x1 classifier. Optional auxiliary decoders share the encoder and see channel-dropout
// perturbed encoder outputs.
//
// Copies are deep: parameters never alias between two SegNet values.
class SegNet {
 public:
  SegNet() = default;
  SegNet(const SegNet& other);
  SegNet& operator=(const SegNet& other);
  SegNet(SegNet&&) noexcept = default;
  SegNet& operator=(SegNet&&) noexcept = default;

  const SegNetConfig& config() const { return config_; }
  // Global class id of each output channel; channel 0 is background.
  const std::vector<int>& class_binding() const { return class_binding_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  bool has_parameter(std::string_view name) const;

  // Main path only, or main plus auxiliary decoders.
  std::vector<Parameter*> trainable(bool include_aux = false);
  std::size_t parameter_count(bool include_aux = false) const;

  bool has_aux() const;
  // Creates auxiliary decoders as copies of the main decoder.
  void attach_aux_decoders();
  // Overwrites every auxiliary decoder with the main decoder's weights.
  void tie_aux_to_main();
  void drop_aux();

  void set_dropout_rate(double rate);

  // Channel counts of the feature taps.
  std::size_t low_channels() const;
  std::size_t decision_channels() const;
  std::size_t encoder_channels(std::size_t block) const;

  // Constructs a network from saved parameters. Names and shapes must match the
  // architecture implied by `config`.
  static SegNet from_parameters(const SegNetConfig& config, std::vector<int> class_binding,
                                std::vector<std::pair<std::string, Tensor>> tensors);

 private:
  friend SegNet init_network(const SegNetConfig&, std::uint64_t, std::vector<int>);
  void add_parameter(std::string name, Tensor value);

  SegNetConfig config_;
  std::vector<int> class_binding_;
  std::vector<Parameter> params_;
};

// He-style fan-in scaled weights, zero biases. Binding defaults to {0, 1, ..., C-1}.
SegNet init_network(const SegNetConfig& config, std::uint64_t seed, std::vector<int> class_binding = {});

// `image` is [in_channels, H, W] with H, W divisible by 2^(encoder_blocks - 1).
ForwardResult forward(const SegNet& net, const Var& image);
ForwardResult forward(const SegNet& net, const Tensor& image);

// Main prediction plus one prediction per auxiliary decoder. Decoder k sees the
// encoder outputs through channel dropout seeded by (dropout_seed, k).
AuxForwardResult forward_with_aux(const SegNet& net, const Tensor& image, std::uint64_t dropout_seed);

// Decision features [D, H, W] used for class prototypes.
Tensor extract_decision_features(const SegNet& net, const Tensor& image);

// Inference-mode class probabilities.
Tensor predict_probs(const SegNet& net, const Tensor& image);

// Hard prediction mapped to global class ids through the class binding.
LabelMap predict_labels(const SegNet& net, const Tensor& image);

}  // namespace mmadapt
