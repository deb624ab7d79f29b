#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mmadapt/tensor.hpp"

namespace mmadapt::cli {

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}
};

// 8-bit RGB, no interlacing. Throws DataError on I/O failure.
void write_png(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_png(const std::filesystem::path& path);

// Grey image with predicted classes blended in (1 green, 2 yellow, 3 blue) and the
// truth contour of every foreground class drawn in red. `truth` may be empty.
RgbImage render_overlay(const Tensor& image, const LabelMap& prediction, const LabelMap& truth);

// One flat colour per teacher index.
RgbImage render_selection(const std::vector<std::uint8_t>& selected, std::size_t height, std::size_t width);

}  // namespace mmadapt::cli
