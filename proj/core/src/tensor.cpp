#include "mmadapt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "mmadapt/errors.hpp"

namespace mmadapt {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  if (values_.size() != shape_size(shape_)) {
    throw ShapeError("tensor of shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(values_.size()));
  }
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void require_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw ShapeError(std::string(what) + ": expected [C, H, W], got " + shape_string(t.shape()));
  }
}

LabelMap argmax_channels(const Tensor& t) {
  require_rank3(t, "argmax_channels");
  const std::size_t channels = t.dim(0), h = t.dim(1), w = t.dim(2), plane = h * w;
  LabelMap out(h, w);
  const double* v = t.data();
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = 0;
    double best_v = v[i];
    for (std::size_t c = 1; c < channels; ++c) {
      if (v[c * plane + i] > best_v) {
        best_v = v[c * plane + i];
        best = c;
      }
    }
    out.data[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace mmadapt
