#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace griduq {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float32 tensor with an optional gradient buffer of the
/// same shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value) { return Tensor({1}, value); }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<float> grad() noexcept { return grad_; }
  std::span<const float> grad() const noexcept { return grad_; }
  /// Allocates a zeroed gradient buffer if none exists.
  std::span<float> ensure_grad();
  void zero_grad();
  void clear_grad() { grad_.clear(); }

  /// Same data, new shape; element count must match.
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
  bool requires_grad_ = false;
  std::vector<float> grad_;
};

}  // namespace griduq
