#include "mmadapt_cli/png.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>

#include "mmadapt/errors.hpp"
#include "mmadapt/metrics.hpp"

namespace mmadapt::cli {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr std::array<std::array<std::uint8_t, 3>, 4> kClassColors{{{0, 0, 0}, {0, 255, 0}, {255, 255, 0}, {0, 128, 255}}};
constexpr std::array<std::array<std::uint8_t, 3>, 6> kTeacherColors{
    {{0, 200, 0}, {230, 200, 0}, {0, 110, 255}, {220, 0, 220}, {0, 200, 200}, {255, 120, 0}}};
constexpr double kAlpha = 0.45;

}  // namespace

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw DataError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng: failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * image.width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw DataError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng: out of memory");
  }
  RgbImage out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng: failed reading " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path.string() + ": expected 8-bit RGB");
  }
  out = RgbImage(png_get_image_width(png, info), png_get_image_height(png, info));
  for (std::size_t y = 0; y < out.height; ++y) png_read_row(png, out.pixels.data() + y * out.width * 3, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

RgbImage render_overlay(const Tensor& image, const LabelMap& prediction, const LabelMap& truth) {
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (prediction.height != h || prediction.width != w) throw ShapeError("render_overlay: prediction size mismatch");
  const bool has_truth = !truth.data.empty();
  if (has_truth && (truth.height != h || truth.width != w)) throw ShapeError("render_overlay: truth size mismatch");
  RgbImage out(w, h);
  for (std::size_t i = 0; i < h * w; ++i) {
    const double g = std::clamp(image[i], 0.0, 1.0) * 255.0;
    const int c = prediction.data[i];
    for (std::size_t k = 0; k < 3; ++k) {
      double v = g;
      if (c != 0) v = (1.0 - kAlpha) * g + kAlpha * kClassColors[std::min<std::size_t>(c, 3)][k];
      out.pixels[i * 3 + k] = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  if (has_truth) {
    for (int c = 1; c < 256; ++c) {
      const BinaryMask m = BinaryMask::from_labels(truth, c);
      if (m.count() == 0) continue;
      for (const Pixel& p : extract_boundary(m)) {
        const std::size_t i = static_cast<std::size_t>(p.row) * w + static_cast<std::size_t>(p.col);
        out.pixels[i * 3] = 255;
        out.pixels[i * 3 + 1] = 0;
        out.pixels[i * 3 + 2] = 0;
      }
    }
  }
  return out;
}

RgbImage render_selection(const std::vector<std::uint8_t>& selected, std::size_t height, std::size_t width) {
  if (selected.size() != height * width) throw ShapeError("render_selection: plane size mismatch");
  RgbImage out(width, height);
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const auto& c = kTeacherColors[selected[i] % kTeacherColors.size()];
    std::copy(c.begin(), c.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(i * 3));
  }
  return out;
}

}  // namespace mmadapt::cli
