#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mmadapt/autograd.hpp"
#include "mmadapt/tensor.hpp"

namespace mmadapt {

// Cross-correlation of x [C_in, H, W] with kernel [C_out, C_in, k, k]; k must be odd.
// Output spatial size is (H + 2*padding - k) / stride + 1.
Var conv2d(const Var& x, const Var& kernel, std::size_t padding);
Var conv2d(const Var& x, const Var& kernel, const Var& bias, std::size_t stride, std::size_t padding);

Var relu(const Var& x);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var sum(const Var& x);
Var mean(const Var& x);

// Align-corners bilinear interpolation of [C, h, w] up to [C, height, width].
Var bilinear_upsample(const Var& x, std::size_t height, std::size_t width);

// Softmax across the channel axis of [C, H, W] logits, max-subtracted per pixel.
Var softmax(const Var& logits);

// Zeroes whole channels with probability `rate` and rescales survivors by 1/(1-rate).
Var channel_dropout(const Var& x, double rate, std::uint64_t seed);

// Mean over non-ignored pixels of -ln max(p[target], 1e-12), pooled over the batch.
// ignore masks, when given, mark pixels to skip with a nonzero byte.
Var cross_entropy(std::span<const Var> probs, std::span<const LabelMap> targets,
                  std::span<const std::vector<std::uint8_t>> ignore = {});
Var cross_entropy(const Var& probs, const LabelMap& target,
                  const std::vector<std::uint8_t>* ignore = nullptr);

// -sum p ln p in nats with 0 ln 0 = 0. Rejects negative entries or a sum off by more than 1e-6.
double shannon_entropy(std::span<const double> p);

// Per-pixel entropy of a [C, H, W] probability map, skipping validation.
std::vector<double> pixel_entropy(const Tensor& probs);

}  // namespace mmadapt
