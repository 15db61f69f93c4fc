#include "deepstreet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "deepstreet/error.hpp"

namespace deepstreet {

std::size_t shape_volume(const Shape& shape) {
  std::size_t volume = 1;
  for (int extent : shape) {
    if (extent <= 0) {
      throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
    }
    volume *= static_cast<std::size_t>(extent);
  }
  return volume;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  if (shape_.empty()) throw DimensionError("tensor needs at least one extent");
  data_.assign(shape_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw DimensionError("tensor needs at least one extent");
  if (shape_volume(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
  }
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_volume(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

}  // namespace deepstreet
