#include "griduq/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include <fmt/format.h>

#include "griduq/errors.hpp"

namespace griduq {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, "x"));
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError(fmt::format("tensor data has {} elements but shape {} needs {}",
                                     data_.size(), shape_str(shape_), shape_numel(shape_)));
  }
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw DimensionError(fmt::format("axis {} out of range for shape {}", axis, shape_str(shape_)));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

float Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

std::span<float> Tensor::ensure_grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0f);
  return grad_;
}

void Tensor::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), 0.0f);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError(fmt::format("cannot reshape {} to {}", shape_str(shape_), shape_str(shape)));
  }
  return Tensor(std::move(shape), data_);
}

}  // namespace griduq
