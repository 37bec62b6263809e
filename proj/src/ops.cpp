#include "fabnet/ops.hpp"

#include "fabnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fabnet {

std::size_t output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                          std::size_t padding, const char* axis) {
  if (kernel == 0 || stride == 0)
    throw GeometryError(std::string("kernel and stride along ") + axis + " must be positive");
  const std::size_t padded = input + 2 * padding;
  if (kernel > padded)
    throw GeometryError(std::string("window ") + std::to_string(kernel) + " exceeds padded " +
                        axis + " extent " + std::to_string(padded));
  if ((padded - kernel) % stride != 0)
    throw GeometryError(std::string("(") + axis + " " + std::to_string(input) + " + 2*" +
                        std::to_string(padding) + " - " + std::to_string(kernel) + ") / stride " +
                        std::to_string(stride) + " is not an integer");
  return (padded - kernel) / stride + 1;
}

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_string(t.shape()));
}

// Output positions [lo, hi) along one axis whose source index
// o*stride + k - padding falls inside [0, extent).
struct ValidRange {
  std::size_t lo;
  std::size_t hi;
};

ValidRange valid_range(std::size_t out_extent, std::size_t extent, std::size_t k,
                       std::size_t stride, std::size_t padding) {
  const long s = static_cast<long>(stride);
  const long shift = static_cast<long>(k) - static_cast<long>(padding);
  // need o*s + shift >= 0 and o*s + shift <= extent - 1
  long lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  long top = static_cast<long>(extent) - 1 - shift;
  long hi = top < 0 ? 0 : top / s + 1;
  hi = std::min(hi, static_cast<long>(out_extent));
  lo = std::min(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct ConvDims {
  std::size_t n, c, h, w, f, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels, const ConvGeom& geom) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  if (kernels.dim(1) != input.dim(1))
    throw DimensionError("conv2d: kernel channel axis (1) is " + std::to_string(kernels.dim(1)) +
                         " but input channel axis (1) is " + std::to_string(input.dim(1)));
  if (kernels.dim(2) != geom.kernel_h || kernels.dim(3) != geom.kernel_w)
    throw DimensionError("conv2d: kernel spatial axes (2,3) " + shape_string(kernels.shape()) +
                         " disagree with geometry " + std::to_string(geom.kernel_h) + "x" +
                         std::to_string(geom.kernel_w));
  ConvDims d{};
  d.n = input.dim(0);
  d.c = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.f = kernels.dim(0);
  d.kh = geom.kernel_h;
  d.kw = geom.kernel_w;
  d.oh = output_extent(d.h, d.kh, geom.stride, geom.padding, "height");
  d.ow = output_extent(d.w, d.kw, geom.stride, geom.padding, "width");
  return d;
}

} // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              const ConvGeom& geom) {
  const ConvDims d = conv_dims(input, kernels, geom);
  if (bias.size() != d.f)
    throw DimensionError("conv2d: bias has " + std::to_string(bias.size()) +
                         " entries but kernel filter axis (0) is " + std::to_string(d.f));
  const std::size_t s = geom.stride;
  const std::size_t p = geom.padding;
  Tensor out({d.n, d.f, d.oh, d.ow});
  const double* x = input.data().data();
  const double* k = kernels.data().data();
  double* y = out.data().data();

  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t f = 0; f < d.f; ++f) {
      double* plane = y + (n * d.f + f) * d.oh * d.ow;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* src = x + (n * d.c + c) * d.h * d.w;
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          const ValidRange rows = valid_range(d.oh, d.h, ky, s, p);
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const double wgt = k[((f * d.c + c) * d.kh + ky) * d.kw + kx];
            const ValidRange cols = valid_range(d.ow, d.w, kx, s, p);
            for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
              // unsigned wrap-around is intended: shift + ox * s is in range
              const std::size_t shift = (oy * s + ky - p) * d.w + kx - p;
              double* orow = plane + oy * d.ow;
              if (s == 1) {
                for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                  orow[ox] += src[shift + ox] * wgt;
              } else {
                for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                  orow[ox] += src[shift + ox * s] * wgt;
              }
            }
          }
        }
      }
      const double b = bias[f];
      for (std::size_t i = 0; i < d.oh * d.ow; ++i)
        plane[i] += b;
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const ConvGeom& geom,
                            const Tensor& grad_output) {
  const ConvDims d = conv_dims(input, kernels, geom);
  if (grad_output.shape() != Shape{d.n, d.f, d.oh, d.ow})
    throw DimensionError("conv2d_backward: gradient shape " + shape_string(grad_output.shape()) +
                         " does not match output shape " +
                         shape_string({d.n, d.f, d.oh, d.ow}));
  const std::size_t s = geom.stride;
  const std::size_t p = geom.padding;
  Conv2dGrads g{Tensor(input.shape()), Tensor(kernels.shape()), Tensor({d.f})};
  const double* x = input.data().data();
  const double* k = kernels.data().data();
  const double* go = grad_output.data().data();
  double* gx = g.input.data().data();
  double* gk = g.kernels.data().data();

  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t f = 0; f < d.f; ++f) {
      const double* gplane = go + (n * d.f + f) * d.oh * d.ow;
      double bsum = 0.0;
      for (std::size_t i = 0; i < d.oh * d.ow; ++i)
        bsum += gplane[i];
      g.bias[f] += bsum;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* src = x + (n * d.c + c) * d.h * d.w;
        double* gsrc = gx + (n * d.c + c) * d.h * d.w;
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          const ValidRange rows = valid_range(d.oh, d.h, ky, s, p);
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const std::size_t widx = ((f * d.c + c) * d.kh + ky) * d.kw + kx;
            const double wgt = k[widx];
            const ValidRange cols = valid_range(d.ow, d.w, kx, s, p);
            double acc = 0.0;
            for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
              const std::size_t base = (oy * s + ky - p) * d.w + kx - p;
              const double* grow = gplane + oy * d.ow;
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) {
                acc += grow[ox] * src[base + ox * s];
                gsrc[base + ox * s] += grow[ox] * wgt;
              }
            }
            gk[widx] += acc;
          }
        }
      }
    }
  }
  return g;
}

PoolResult maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  require_rank(input, 4, "maxpool2d input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = output_extent(h, window, stride, 0, "height");
  const std::size_t ow = output_extent(w, window, stride, 0, "width");
  PoolResult r{Tensor({n, c, oh, ow}), ArgmaxIndexMap(n * c * oh * ow)};
  const double* x = input.data().data();
  double* y = r.output.data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + oy * stride * w + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          const std::size_t row = base + (oy * stride + ky) * w + ox * stride;
          for (std::size_t kx = 0; kx < window; ++kx)
            if (x[row + kx] > x[best])
              best = row + kx;
        }
        y[o] = x[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

Tensor maxpool2d_backward(const Tensor& grad_output, const ArgmaxIndexMap& argmax,
                          const Shape& input_shape) {
  if (grad_output.size() != argmax.size())
    throw DimensionError("maxpool2d_backward: gradient has " +
                         std::to_string(grad_output.size()) + " cells but argmax map has " +
                         std::to_string(argmax.size()));
  Tensor gx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i)
    gx[argmax[i]] += grad_output[i];
  return gx;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul: lhs axis 1 (" + std::to_string(a.dim(1)) +
                         ") differs from rhs axis 0 (" + std::to_string(b.dim(0)) + ")");
  const std::size_t m = a.dim(0), kk = a.dim(1), p = b.dim(1);
  Tensor out({m, p});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  // i-k-j loop: each output cell still accumulates in ascending k.
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * p;
    for (std::size_t k = 0; k < kk; ++k) {
      const double aik = pa[i * kk + k];
      const double* brow = pb + k * p;
      for (std::size_t j = 0; j < p; ++j)
        orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose input");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.at(j, i) = a.at(i, j);
  return out;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0)
    return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data())
    v = sigmoid(v);
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data())
    v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor scale(const Tensor& input, double factor) {
  Tensor out = input;
  for (double& v : out.data())
    v *= factor;
  return out;
}

Tensor add_bias(const Tensor& input, const Tensor& bias, std::size_t axis) {
  if (axis >= input.rank() || input.dim(axis) != bias.size())
    throw DimensionError("add_bias: bias of " + std::to_string(bias.size()) +
                         " entries does not match axis " + std::to_string(axis) + " of " +
                         shape_string(input.shape()));
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < input.rank(); ++i)
    inner *= input.dim(i);
  const std::size_t len = bias.size();
  Tensor out = input;
  double* p = out.data().data();
  for (std::size_t i = 0; i < out.size(); ++i)
    p[i] += bias[(i / inner) % len];
  return out;
}

} // namespace fabnet
