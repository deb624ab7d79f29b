#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmadapt/tensor.hpp"

namespace mmadapt {

struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
  void set(std::size_t y, std::size_t x, bool v = true) { bits[y * width + x] = v ? 1 : 0; }
  std::size_t count() const;

  // Pixels of `labels` equal to `class_id`.
  static BinaryMask from_labels(const LabelMap& labels, int class_id);
};

struct Pixel {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

// 2|P n T| / (|P| + |T|); 1.0 when both are empty.
double dice_score(const BinaryMask& pred, const BinaryMask& truth);

// Foreground pixels with at least one background 4-neighbour; the border counts as background.
std::vector<Pixel> extract_boundary(const BinaryMask& mask);

// Symmetric mean Euclidean boundary distance in pixels. 0 when both boundaries are
// empty; `empty_penalty` (default: image diagonal) when exactly one is.
double average_surface_distance(const BinaryMask& pred, const BinaryMask& truth,
                                std::optional<double> empty_penalty = std::nullopt);

struct ClassMetrics {
  int class_id = 0;
  std::string name;
  double dsc = 0.0;
  double asd = 0.0;
};

struct MetricReport {
  std::vector<ClassMetrics> classes;
  double mean_dsc = 0.0;
  double mean_asd = 0.0;
  std::size_t images = 0;

  const ClassMetrics& for_class(int class_id) const;

  std::string to_csv() const;
  std::string to_json() const;
};

// Per-image DSC/ASD for each foreground class, averaged over images.
MetricReport evaluate_predictions(const std::vector<LabelMap>& predictions, const std::vector<LabelMap>& truths,
                                  const std::vector<int>& class_ids);

// Display name for the built-in benchmark classes ("liver", "spleen", "kidney").
std::string class_name(int class_id);

}  // namespace mmadapt
