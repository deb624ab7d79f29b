#include "mmadapt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "mmadapt/errors.hpp"
#include "mmadapt/rng.hpp"

namespace mmadapt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t in_c, h, w, out_c, k, stride, pad, out_h, out_w;
  std::size_t cols() const { return out_h * out_w; }
  std::size_t rows() const { return in_c * k * k; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t pad) {
  require_rank3(x, "conv2d input");
  if (kernel.rank() != 4) {
    throw ShapeError("conv2d kernel: expected [C_out, C_in, k, k], got " + shape_string(kernel.shape()));
  }
  if (kernel.dim(1) != x.dim(0)) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input " + shape_string(x.shape()) + " has " +
                     std::to_string(x.dim(0)));
  }
  if (kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d: kernel must be square, got " + shape_string(kernel.shape()));
  }
  const std::size_t k = kernel.dim(2);
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t h = x.dim(1), w = x.dim(2);
  if (h + 2 * pad < k || w + 2 * pad < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " with padding " + std::to_string(pad) +
                     " does not fit input " + shape_string(x.shape()));
  }
  return {x.dim(0), h, w, kernel.dim(0), k, stride, pad,
          (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1};
}

void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t n = g.cols();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    const double* plane = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * n;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* dx) {
  const std::size_t n = g.cols();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    double* plane = dx + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * n;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const double* src = row + oy * g.out_w;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Var conv2d_impl(const Var& x, const Var& kernel, const Var* bias, std::size_t stride, std::size_t pad) {
  const ConvGeometry g = conv_geometry(x.value(), kernel.value(), stride, pad);
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != g.out_c)) {
    throw ShapeError("conv2d bias: expected [" + std::to_string(g.out_c) + "], got " +
                     shape_string(bias->shape()));
  }

  // The column buffer is retained for the backward pass only when one will run.
  auto col = std::make_shared<std::vector<double>>();
  const double* col_ptr = x.value().data();
  if (!g.is_pointwise()) {
    col->resize(g.rows() * g.cols());
    im2col(g, x.value().data(), col->data());
    col_ptr = col->data();
  }

  Tensor out(Shape{g.out_c, g.out_h, g.out_w});
  ConstMapMat wmat(kernel.value().data(), g.out_c, g.rows());
  ConstMapMat cmat(col_ptr, g.rows(), g.cols());
  MapMat ymat(out.data(), g.out_c, g.cols());
  ymat.noalias() = wmat * cmat;
  if (bias) {
    for (std::size_t o = 0; o < g.out_c; ++o) ymat.row(o).array() += bias->value()[o];
  }

  std::vector<Var> inputs{x, kernel};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return make_op(std::move(out), std::move(inputs), [g, col, has_bias](Node& self) {
    Node& xn = *self.inputs[0];
    Node& kn = *self.inputs[1];
    ConstMapMat dy(self.grad.data(), g.out_c, g.cols());
    const double* col_ptr = g.is_pointwise() ? xn.value.data() : col->data();
    ConstMapMat cmat(col_ptr, g.rows(), g.cols());
    if (kn.requires_grad) {
      MapMat dw(kn.grad_buffer().data(), g.out_c, g.rows());
      dw.noalias() += dy * cmat.transpose();
    }
    if (has_bias && self.inputs[2]->requires_grad) {
      Tensor& db = self.inputs[2]->grad_buffer();
      // Plain loop: Eigen's vectorized redux order depends on pointer alignment.
      for (std::size_t o = 0; o < g.out_c; ++o) {
        const double* r = self.grad.data() + o * g.cols();
        double acc = 0.0;
        for (std::size_t i = 0; i < g.cols(); ++i) acc += r[i];
        db[o] += acc;
      }
    }
    if (xn.requires_grad) {
      ConstMapMat wmat(kn.value.data(), g.out_c, g.rows());
      if (g.is_pointwise()) {
        MapMat dx(xn.grad_buffer().data(), g.in_c, g.cols());
        dx.noalias() += wmat.transpose() * dy;
      } else {
        RowMat dcol = wmat.transpose() * dy;
        col2im_add(g, dcol.data(), xn.grad_buffer().data());
      }
    }
  });
}

struct AxisInterp {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

AxisInterp align_corners_axis(std::size_t in, std::size_t out) {
  AxisInterp a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src =
        out > 1 ? static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    a.lo[i] = lo;
    a.hi[i] = std::min(lo + 1, in - 1);
    a.frac[i] = src - static_cast<double>(lo);
  }
  return a;
}

}  // namespace

Var conv2d(const Var& x, const Var& kernel, std::size_t padding) {
  return conv2d_impl(x, kernel, nullptr, 1, padding);
}

Var conv2d(const Var& x, const Var& kernel, const Var& bias, std::size_t stride, std::size_t padding) {
  return conv2d_impl(x, kernel, bias.defined() ? &bias : nullptr, stride, padding);
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.values()) v *= factor;
  return make_op(std::move(out), {x}, [factor](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_op(Tensor::scalar(s), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double d = self.grad[0];
    for (auto& v : g.values()) v += d;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var bilinear_upsample(const Var& x, std::size_t height, std::size_t width) {
  require_rank3(x.value(), "bilinear_upsample");
  const std::size_t channels = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  if (height < h || width < w) {
    throw ShapeError("bilinear_upsample: cannot downsample " + shape_string(x.shape()) + " to " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  if (height == h && width == w) return x;

  auto ay = std::make_shared<AxisInterp>(align_corners_axis(h, height));
  auto ax = std::make_shared<AxisInterp>(align_corners_axis(w, width));
  Tensor out(Shape{channels, height, width});
  const double* src = x.value().data();
  double* dst = out.data();
  for (std::size_t c = 0; c < channels; ++c) {
    const double* p = src + c * h * w;
    for (std::size_t y = 0; y < height; ++y) {
      const double fy = ay->frac[y];
      const double* r0 = p + ay->lo[y] * w;
      const double* r1 = p + ay->hi[y] * w;
      double* o = dst + (c * height + y) * width;
      for (std::size_t xx = 0; xx < width; ++xx) {
        const double fx = ax->frac[xx];
        const std::size_t x0 = ax->lo[xx], x1 = ax->hi[xx];
        const double top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
        const double bot = r1[x0] * (1.0 - fx) + r1[x1] * fx;
        o[xx] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return make_op(std::move(out), {x}, [ay, ax, channels, h, w, height, width](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double* dy = self.grad.data();
    for (std::size_t c = 0; c < channels; ++c) {
      double* p = g.data() + c * h * w;
      for (std::size_t y = 0; y < height; ++y) {
        const double fy = ay->frac[y];
        double* r0 = p + ay->lo[y] * w;
        double* r1 = p + ay->hi[y] * w;
        const double* o = dy + (c * height + y) * width;
        for (std::size_t xx = 0; xx < width; ++xx) {
          const double fx = ax->frac[xx];
          const std::size_t x0 = ax->lo[xx], x1 = ax->hi[xx];
          const double top = o[xx] * (1.0 - fy);
          const double bot = o[xx] * fy;
          r0[x0] += top * (1.0 - fx);
          r0[x1] += top * fx;
          r1[x0] += bot * (1.0 - fx);
          r1[x1] += bot * fx;
        }
      }
    }
  });
}

Var softmax(const Var& logits) {
  require_rank3(logits.value(), "softmax");
  const std::size_t channels = logits.value().dim(0);
  if (channels < 2) throw ShapeError("softmax: need at least 2 channels, got " + std::to_string(channels));
  const std::size_t plane = logits.value().dim(1) * logits.value().dim(2);
  Tensor out(logits.shape());
  const double* z = logits.value().data();
  double* p = out.data();
  for (std::size_t i = 0; i < plane; ++i) {
    double mx = z[i];
    for (std::size_t c = 1; c < channels; ++c) mx = std::max(mx, z[c * plane + i]);
    double s = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const double e = std::exp(z[c * plane + i] - mx);
      p[c * plane + i] = e;
      s += e;
    }
    for (std::size_t c = 0; c < channels; ++c) p[c * plane + i] /= s;
  }
  return make_op(std::move(out), {logits}, [channels, plane](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double* p = self.value.data();
    const double* dp = self.grad.data();
    for (std::size_t i = 0; i < plane; ++i) {
      double dot = 0.0;
      for (std::size_t c = 0; c < channels; ++c) dot += dp[c * plane + i] * p[c * plane + i];
      for (std::size_t c = 0; c < channels; ++c) {
        g[c * plane + i] += p[c * plane + i] * (dp[c * plane + i] - dot);
      }
    }
  });
}

Var channel_dropout(const Var& x, double rate, std::uint64_t seed) {
  require_rank3(x.value(), "channel_dropout");
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  const std::size_t channels = x.value().dim(0);
  const std::size_t plane = x.value().dim(1) * x.value().dim(2);
  auto factors = std::make_shared<std::vector<double>>(channels, 1.0);
  Rng rng(seed);
  for (auto& f : *factors) f = rng.uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
  Tensor out = x.value();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] *= (*factors)[c];
  }
  return make_op(std::move(out), {x}, [factors, plane](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t c = 0; c < factors->size(); ++c) {
      for (std::size_t i = 0; i < plane; ++i) g[c * plane + i] += (*factors)[c] * self.grad[c * plane + i];
    }
  });
}

Var cross_entropy(std::span<const Var> probs, std::span<const LabelMap> targets,
                  std::span<const std::vector<std::uint8_t>> ignore) {
  constexpr double kClamp = 1e-12;
  if (probs.size() != targets.size() || probs.empty()) {
    throw ShapeError("cross_entropy: need matching non-empty prediction and target lists");
  }
  if (!ignore.empty() && ignore.size() != probs.size()) {
    throw ShapeError("cross_entropy: ignore mask list length mismatch");
  }
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t b = 0; b < probs.size(); ++b) {
    const Tensor& p = probs[b].value();
    require_rank3(p, "cross_entropy");
    const LabelMap& t = targets[b];
    const std::size_t channels = p.dim(0), plane = p.dim(1) * p.dim(2);
    if (t.height != p.dim(1) || t.width != p.dim(2)) {
      throw ShapeError("cross_entropy: target " + std::to_string(t.height) + "x" + std::to_string(t.width) +
                       " vs prediction " + shape_string(p.shape()));
    }
    if (!ignore.empty() && ignore[b].size() != plane) throw ShapeError("cross_entropy: ignore mask size mismatch");
    for (std::size_t i = 0; i < plane; ++i) {
      if (t.data[i] >= channels) {
        throw ShapeError("cross_entropy: target class " + std::to_string(t.data[i]) + " >= " +
                         std::to_string(channels) + " classes");
      }
      if (!ignore.empty() && ignore[b][i]) continue;
      total -= std::log(std::max(p[t.data[i] * plane + i], kClamp));
      ++count;
    }
  }
  if (count == 0) return Var::constant(Tensor::scalar(0.0));

  std::vector<Var> inputs(probs.begin(), probs.end());
  auto tgt = std::make_shared<std::vector<LabelMap>>(targets.begin(), targets.end());
  auto ign = std::make_shared<std::vector<std::vector<std::uint8_t>>>(ignore.begin(), ignore.end());
  const double inv = 1.0 / static_cast<double>(count);
  return make_op(Tensor::scalar(total * inv), std::move(inputs), [tgt, ign, inv](Node& self) {
    const double d = self.grad[0] * inv;
    for (std::size_t b = 0; b < self.inputs.size(); ++b) {
      Node& in = *self.inputs[b];
      if (!in.requires_grad) continue;
      Tensor& g = in.grad_buffer();
      const std::size_t plane = in.value.dim(1) * in.value.dim(2);
      const LabelMap& t = (*tgt)[b];
      for (std::size_t i = 0; i < plane; ++i) {
        if (!ign->empty() && (*ign)[b][i]) continue;
        const std::size_t idx = t.data[i] * plane + i;
        const double pv = in.value[idx];
        if (pv > kClamp) g[idx] -= d / pv;
      }
    }
  });
}

Var cross_entropy(const Var& probs, const LabelMap& target, const std::vector<std::uint8_t>* ignore) {
  std::vector<std::vector<std::uint8_t>> ign;
  if (ignore) ign.push_back(*ignore);
  return cross_entropy(std::span<const Var>(&probs, 1), std::span<const LabelMap>(&target, 1), ign);
}

double shannon_entropy(std::span<const double> p) {
  double s = 0.0, h = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument("shannon_entropy: negative or NaN probability");
    s += v;
    if (v > 0.0) h -= v * std::log(v);
  }
  if (std::abs(s - 1.0) > 1e-6) {
    throw std::invalid_argument("shannon_entropy: probabilities sum to " + std::to_string(s));
  }
  return h;
}

std::vector<double> pixel_entropy(const Tensor& probs) {
  require_rank3(probs, "pixel_entropy");
  const std::size_t channels = probs.dim(0), plane = probs.dim(1) * probs.dim(2);
  std::vector<double> h(plane, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* p = probs.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      if (p[i] > 0.0) h[i] -= p[i] * std::log(p[i]);
    }
  }
  return h;
}

}  // namespace mmadapt
