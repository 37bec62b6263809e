#pragma once

#include "fabnet/tensor.hpp"

#include <cstddef>
#include <vector>

namespace fabnet {

/// Sliding-window geometry shared by convolution and pooling.
struct ConvGeom {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;

  bool operator==(const ConvGeom&) const = default;
};

/// Output extent of a window sweep; throws GeometryError unless it is a
/// positive integer.
std::size_t output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                          std::size_t padding, const char* axis);

/// Cross-correlation of [N,C,H,W] with [F,C,kh,kw] plus per-filter bias.
/// Per output cell the products are summed in ascending (c, ky, kx) order,
/// then the bias is added.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              const ConvGeom& geom);

struct Conv2dGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const ConvGeom& geom,
                            const Tensor& grad_output);

/// Flat source index (into the input buffer) of each pooled maximum.
using ArgmaxIndexMap = std::vector<std::size_t>;

struct PoolResult {
  Tensor output;
  ArgmaxIndexMap argmax;
};

/// Max pooling with a square window. Ties resolve to the first position in
/// row-major window order.
PoolResult maxpool2d(const Tensor& input, std::size_t window, std::size_t stride);

Tensor maxpool2d_backward(const Tensor& grad_output, const ArgmaxIndexMap& argmax,
                          const Shape& input_shape);

/// [M,K] x [K,P] with ascending-k summation.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor sigmoid(const Tensor& input);
Tensor relu(const Tensor& input);
Tensor scale(const Tensor& input, double factor);

/// Adds bias[j] to every element whose index along `axis` is j
/// (axis 1 for [N,K] rows and for [N,C,H,W] channels).
Tensor add_bias(const Tensor& input, const Tensor& bias, std::size_t axis = 1);

double sigmoid(double x) noexcept;

} // namespace fabnet
