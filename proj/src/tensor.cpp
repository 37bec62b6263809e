#include "fabnet/tensor.hpp"

#include "fabnet/error.hpp"

#include <algorithm>
#include <utility>

namespace fabnet {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      out += ',';
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_volume(const Shape& shape) {
  std::size_t volume = 1;
  for (auto d : shape)
    volume *= d;
  return volume;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty())
    throw DimensionError("tensor shape must have at least one axis");
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (shape[i] == 0)
      throw DimensionError("tensor axis " + std::to_string(i) + " has size 0 in shape " +
                           shape_string(shape));
}

} // namespace

Tensor::Tensor(Shape shape) : Tensor(std::move(shape), 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_volume(shape_))
    throw DimensionError("buffer of " + std::to_string(data_.size()) +
                         " values does not fill shape " + shape_string(shape_));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols)
      throw DimensionError("ragged rows in matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::reshaped(Shape shape) const& {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::reshaped(Shape shape) && {
  return Tensor(std::move(shape), std::move(data_));
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > shape_.at(0))
    throw DimensionError("row slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for leading axis " + std::to_string(shape_.at(0)));
  const std::size_t stride = data_.size() / shape_[0];
  Shape shape = shape_;
  shape[0] = end - begin;
  return Tensor(std::move(shape), std::vector<double>(data_.begin() + begin * stride,
                                                      data_.begin() + end * stride));
}

Tensor stack(std::span<const Tensor* const> items) {
  if (items.empty())
    throw DimensionError("cannot stack zero tensors");
  const Shape& inner = items.front()->shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<double> data;
  data.reserve(shape_volume(shape));
  for (const Tensor* t : items) {
    if (t->shape() != inner)
      throw DimensionError("stack: shape " + shape_string(t->shape()) + " differs from " +
                           shape_string(inner));
    data.insert(data.end(), t->buffer().begin(), t->buffer().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

} // namespace fabnet
