#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gleason/error.hpp"

namespace gleason::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

// Dense row-major n-dimensional array. Activations use NCHW with a leading
// batch dimension; fully-connected data uses (N, features).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    for (auto d : shape_)
      if (d == 0) throw data_error("tensor dimensions must be positive: " + shape_string(shape_));
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
      throw data_error("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  void reshape(Shape shape) {
    if (shape_size(shape) != data_.size())
      throw data_error("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
  }

  // Shape without the leading batch dimension.
  Shape sample_shape() const { return Shape(shape_.begin() + 1, shape_.end()); }
  std::size_t batch() const { return shape_.empty() ? 0 : shape_[0]; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape_ = shape_;
    out.data_.assign(data_.begin(), data_.end());
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  template <typename U>
  friend class Tensor;

  Shape shape_;
  std::vector<T> data_;
};

// Stacks equally-shaped samples into one batch tensor.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> samples) {
  if (samples.empty()) throw data_error("cannot stack an empty sample list");
  Shape shape{samples.size()};
  const auto& s0 = samples.front().shape();
  shape.insert(shape.end(), s0.begin(), s0.end());
  Tensor<T> out(shape);
  const std::size_t per = samples.front().size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].shape() != s0) throw data_error("stack: sample " + std::to_string(i) + " has shape " +
                                                   shape_string(samples[i].shape()) + ", expected " + shape_string(s0));
    std::copy(samples[i].data(), samples[i].data() + per, out.data() + i * per);
  }
  return out;
}

// Copies sample `index` out of a batch tensor.
template <typename T>
Tensor<T> unstack(const Tensor<T>& batch, std::size_t index) {
  Shape shape = batch.sample_shape();
  const std::size_t per = shape_size(shape);
  std::vector<T> data(batch.data() + index * per, batch.data() + (index + 1) * per);
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace gleason::nn
