#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "anomap/error.hpp"

namespace anomap::nn {

/// NCHW extents.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
  std::size_t item_size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require(data_.size() == shape_.size(), ErrorKind::kShape,
            "tensor data length does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  T at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  std::span<T> item(int n) {
    return std::span<T>(data_).subspan(n * shape_.item_size(), shape_.item_size());
  }
  std::span<const T> item(int n) const {
    return std::span<const T>(data_).subspan(n * shape_.item_size(), shape_.item_size());
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape shape) {
    require(shape.size() == data_.size(), ErrorKind::kShape,
            "cannot reshape " + shape_.str() + " to " + shape.str());
    shape_ = shape;
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

/// Concatenates two tensors along the batch axis.
template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape().c == b.shape().c && a.shape().h == b.shape().h &&
              a.shape().w == b.shape().w,
          ErrorKind::kShape, "concat_batch: " + a.shape().str() + " vs " + b.shape().str());
  Shape s = a.shape();
  s.n += b.shape().n;
  std::vector<T> data(a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor<T>(s, std::move(data));
}

/// Items [first, first + count) of the batch.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& t, int first, int count) {
  Shape s = t.shape();
  require(first >= 0 && count >= 0 && first + count <= s.n, ErrorKind::kShape,
          "slice_batch out of range for " + s.str());
  s.n = count;
  const auto begin = t.values().begin() + static_cast<std::ptrdiff_t>(first * s.item_size());
  return Tensor<T>(s, std::vector<T>(begin, begin + static_cast<std::ptrdiff_t>(s.size())));
}

}  // namespace anomap::nn
