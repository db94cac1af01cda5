#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "jigsawhsi/random.hpp"
#include "jigsawhsi/tensor.hpp"

namespace jigsawhsi::nn {

/// A trainable array with its gradient accumulator.
template <class T>
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;
  /// Kernels take L2 regularization; biases do not.
  bool is_weight = true;

  Param() = default;
  Param(std::string param_name, std::vector<std::size_t> dims, bool weight);

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// Glorot-uniform draw for a weight with the given fan sizes. Values are drawn
/// in double so float and double models built from one seed agree.
template <class T>
void glorot_uniform(Param<T>& p, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// k x k convolution, stride 1, zero same-padding.
template <class T>
class Conv2D {
 public:
  Conv2D() = default;
  Conv2D(std::string name, std::size_t kernel, std::size_t in_channels, std::size_t out_channels);

  void init(Rng& rng);
  Tensor4<T> forward(const Tensor4<T>& x) const;
  /// Adds parameter gradients and returns d(loss)/dx.
  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& dy);

  std::size_t kernel() const { return kernel_; }
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }

  Param<T> weight;
  Param<T> bias;

 private:
  std::size_t kernel_ = 1;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

/// Affine map on (N, 1, 1, F) tensors.
template <class T>
class Dense {
 public:
  Dense() = default;
  Dense(std::string name, std::size_t in_features, std::size_t units);

  void init(Rng& rng);
  Tensor4<T> forward(const Tensor4<T>& x) const;
  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& dy);

  std::size_t in_features() const { return in_; }
  std::size_t units() const { return out_; }

  Param<T> weight;
  Param<T> bias;

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

template <class T>
Tensor4<T> relu(const Tensor4<T>& x);
/// Gradient through relu given its output.
template <class T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy);

/// p x p max over a stride-1 same-padded window (padding never wins). Ties go
/// to the first element in row-major order, which also receives the gradient.
template <class T>
Tensor4<T> max_pool(const Tensor4<T>& x, std::size_t p);
template <class T>
Tensor4<T> max_pool_backward(const Tensor4<T>& x, const Tensor4<T>& dy, std::size_t p);

/// p x p mean with stride p; right/bottom zero padding when p does not divide
/// the extent, so the output is ceil(H/p) x ceil(W/p). Always divides by p^2.
template <class T>
Tensor4<T> avg_pool(const Tensor4<T>& x, std::size_t p);
template <class T>
Tensor4<T> avg_pool_backward(const Tensor4<T>& dy, const Shape4& input_shape, std::size_t p);

template <class T>
Tensor4<T> concat_channels(std::span<const Tensor4<T>* const> xs);
/// Inverse of concat_channels for gradients.
template <class T>
std::vector<Tensor4<T>> split_channels(const Tensor4<T>& dy, std::span<const std::size_t> channels);

/// Centre pixel of each item: (N, H, W, C) -> (N, 1, 1, C). H and W must be odd.
template <class T>
Tensor4<T> crop_center(const Tensor4<T>& x);
template <class T>
Tensor4<T> crop_center_backward(const Tensor4<T>& dy, const Shape4& input_shape);

/// (N, H, W, C) -> (N, 1, 1, H*W*C).
template <class T>
Tensor4<T> flatten(const Tensor4<T>& x) {
  const Shape4 s = x.shape();
  return x.reshaped({s.n, 1, 1, s.per_item()});
}

enum class Mode { Train, Infer };

/// Inverted dropout. In training each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); inference is the identity.
template <class T>
class Dropout {
 public:
  explicit Dropout(double rate = 0.0);

  double rate() const { return rate_; }
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode, Rng& rng);
  Tensor4<T> backward(const Tensor4<T>& dy) const;

 private:
  double rate_;
  std::vector<unsigned char> keep_;
};

template <class T>
struct SoftmaxXent {
  T loss = T(0);
  Tensor4<T> probs;
  Tensor4<T> dlogits;
};

/// Row-stabilized softmax and mean cross-entropy against one-hot targets.
template <class T>
SoftmaxXent<T> softmax_xent(const Tensor4<T>& logits, const Tensor4<T>& targets);

template <class T>
Tensor4<T> softmax(const Tensor4<T>& logits);

/// coeff * sum(w^2) over weight arrays; adds 2 * coeff * w to their gradients.
template <class T>
T l2_penalty(std::span<Param<T>* const> params, double coeff);

/// Penalty value only.
template <class T>
T l2_value(std::span<const Param<T>* const> params, double coeff);

}  // namespace jigsawhsi::nn
