#include "caa/diffengine/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "caa/error.hpp"

namespace caa::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::vector(std::initializer_list<float> values) {
  return Tensor(Shape{values.size()}, std::vector<float>(values));
}

float Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }

Tensor Tensor::reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

Tensor Tensor::slice_rows(std::size_t begin, std::size_t count) const {
  if (shape_.empty() || begin + count > shape_[0]) {
    throw ShapeError("slice_rows out of range for shape " + to_string(shape_));
  }
  Shape s = shape_;
  s[0] = count;
  const std::size_t stride = shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  std::vector<float> d(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                       data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
  return Tensor(std::move(s), std::move(d));
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows of zero tensors");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw ShapeError("concat_rows needs rank >= 1");
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat_rows shape mismatch: " + to_string(shape) + " vs " + to_string(p.shape()));
    }
    rows += p.shape()[0];
  }
  shape[0] = rows;
  std::vector<float> data;
  data.reserve(numel(shape));
  for (const Tensor& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace caa::ad
