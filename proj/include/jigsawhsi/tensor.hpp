#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "jigsawhsi/error.hpp"

namespace jigsawhsi::nn {

/// Batch x height x width x channels. Dense activations use h = w = 1.
struct Shape4 {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  std::size_t size() const { return n * h * w * c; }
  std::size_t per_item() const { return h * w * c; }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

inline std::string to_string(const Shape4& s) { return fmt::format("({}, {}, {}, {})", s.n, s.h, s.w, s.c); }

/// Dense NHWC tensor, channels fastest.
template <class T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), values_(shape.size(), fill) {}
  Tensor4(Shape4 shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
      throw ValidationError("autodiff-nn", fmt::format("tensor of shape {} given {} values", to_string(shape_),
                                                       values_.size()));
    }
  }

  static Tensor4 matrix(std::size_t rows, std::size_t cols, T fill = T(0)) { return Tensor4({rows, 1, 1, cols}, fill); }

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::vector<T>& storage() { return values_; }
  const std::vector<T>& storage() const { return values_; }

  std::size_t index(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const {
    return ((n * shape_.h + y) * shape_.w + x) * shape_.c + c;
  }
  T& at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) { return values_[index(n, y, x, c)]; }
  const T& at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const { return values_[index(n, y, x, c)]; }

  /// Row view of an (N, 1, 1, F) tensor or a flattened item.
  std::span<T> item(std::size_t n) { return {values_.data() + n * shape_.per_item(), shape_.per_item()}; }
  std::span<const T> item(std::size_t n) const {
    return {values_.data() + n * shape_.per_item(), shape_.per_item()};
  }

  void fill(T value) { std::fill(values_.begin(), values_.end(), value); }

  /// Same values, new shape of equal size.
  Tensor4 reshaped(Shape4 shape) const& { return Tensor4(shape, values_); }
  Tensor4 reshaped(Shape4 shape) && { return Tensor4(shape, std::move(values_)); }

  template <class U>
  Tensor4<U> cast() const {
    Tensor4<U> out(shape_);
    for (std::size_t i = 0; i < values_.size(); ++i) out.data()[i] = static_cast<U>(values_[i]);
    return out;
  }

 private:
  Shape4 shape_;
  std::vector<T> values_;
};

}  // namespace jigsawhsi::nn
