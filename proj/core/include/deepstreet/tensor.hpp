#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace deepstreet {

using Shape = std::vector<int>;

std::size_t shape_volume(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major float32 array. Extents are strictly positive and the
/// element count always equals the product of the extents.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value) { return Tensor({1}, std::vector<float>{value}); }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* raw() { return data_.data(); }
  const float* raw() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessors for [N, C, H, W] tensors.
  float& at(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const float& at(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(float value);
  bool all_finite() const;
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Throws DimensionError naming `what` when the two shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace deepstreet
