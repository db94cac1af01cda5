#include "jigsawhsi/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jigsawhsi/kernels.hpp"

namespace jigsawhsi::nn {

namespace {

constexpr std::string_view kModule = "autodiff-nn";

std::size_t product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

template <class T>
Param<T>::Param(std::string param_name, std::vector<std::size_t> dims, bool weight)
    : name(std::move(param_name)), shape(std::move(dims)), value(product(shape), T(0)), grad(value.size(), T(0)),
      is_weight(weight) {}

template <class T>
void glorot_uniform(Param<T>& p, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : p.value) v = static_cast<T>(rng.uniform(-limit, limit));
}

// Conv2D ---------------------------------------------------------------------

template <class T>
Conv2D<T>::Conv2D(std::string name, std::size_t kernel, std::size_t in_channels, std::size_t out_channels)
    : weight(name + ".kernel", {kernel, kernel, in_channels, out_channels}, true),
      bias(name + ".bias", {out_channels}, false),
      kernel_(kernel),
      in_(in_channels),
      out_(out_channels) {
  if (kernel % 2 == 0) throw ValidationError(kModule, fmt::format("{}: kernel size must be odd", name));
  if (in_channels == 0 || out_channels == 0) throw ValidationError(kModule, fmt::format("{}: empty channels", name));
}

template <class T>
void Conv2D<T>::init(Rng& rng) {
  glorot_uniform(weight, kernel_ * kernel_ * in_, kernel_ * kernel_ * out_, rng);
  std::fill(bias.value.begin(), bias.value.end(), T(0));
}

template <class T>
Tensor4<T> Conv2D<T>::forward(const Tensor4<T>& x) const {
  if (x.shape().c != in_) {
    throw ValidationError(kModule, fmt::format("channel mismatch: {} expects {} channels, got {}", weight.name, in_,
                                               x.shape().c));
  }
  Tensor4<T> y({x.shape().n, x.shape().h, x.shape().w, out_});
  kernels::parallel::conv2d_forward<T>(x, weight.value, bias.value, kernel_, y);
  return y;
}

template <class T>
Tensor4<T> Conv2D<T>::backward(const Tensor4<T>& x, const Tensor4<T>& dy) {
  kernels::parallel::conv2d_backward_params<T>(x, dy, kernel_, weight.grad, bias.grad);
  Tensor4<T> dx(x.shape());
  kernels::parallel::conv2d_backward_input<T>(dy, weight.value, kernel_, dx);
  return dx;
}

// Dense ----------------------------------------------------------------------

template <class T>
Dense<T>::Dense(std::string name, std::size_t in_features, std::size_t units)
    : weight(name + ".kernel", {in_features, units}, true),
      bias(name + ".bias", {units}, false),
      in_(in_features),
      out_(units) {
  if (in_features == 0 || units == 0) throw ValidationError(kModule, fmt::format("{}: empty dense layer", name));
}

template <class T>
void Dense<T>::init(Rng& rng) {
  glorot_uniform(weight, in_, out_, rng);
  std::fill(bias.value.begin(), bias.value.end(), T(0));
}

template <class T>
Tensor4<T> Dense<T>::forward(const Tensor4<T>& x) const {
  if (x.shape().per_item() != in_) {
    throw ValidationError(kModule, fmt::format("{} expects {} features, got {}", weight.name, in_,
                                               x.shape().per_item()));
  }
  const Tensor4<T> flat = x.shape().h == 1 && x.shape().w == 1 ? x : flatten(x);
  Tensor4<T> y = Tensor4<T>::matrix(x.shape().n, out_);
  kernels::parallel::dense_forward<T>(flat, weight.value, bias.value, y);
  return y;
}

template <class T>
Tensor4<T> Dense<T>::backward(const Tensor4<T>& x, const Tensor4<T>& dy) {
  const Tensor4<T> flat = x.shape().h == 1 && x.shape().w == 1 ? x : flatten(x);
  kernels::parallel::dense_backward_params<T>(flat, dy, weight.grad, bias.grad);
  Tensor4<T> dx = Tensor4<T>::matrix(x.shape().n, in_);
  kernels::parallel::dense_backward_input<T>(dy, weight.value, dx);
  return std::move(dx).reshaped(x.shape());
}

// Elementwise and pooling -----------------------------------------------------

template <class T>
Tensor4<T> relu(const Tensor4<T>& x) {
  Tensor4<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  return y;
}

template <class T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy) {
  Tensor4<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data()[i] = y.data()[i] > T(0) ? dy.data()[i] : T(0);
  return dx;
}

namespace {

struct Window {
  long y0, y1, x0, x1;  // half-open
};

Window pool_window(long oy, long ox, long h, long w, std::size_t p) {
  const long before = (static_cast<long>(p) - 1) / 2;
  return {std::max(oy - before, 0L), std::min(oy - before + static_cast<long>(p), h),
          std::max(ox - before, 0L), std::min(ox - before + static_cast<long>(p), w)};
}

template <class T>
std::size_t argmax_in_window(const Tensor4<T>& x, std::size_t n, std::size_t c, const Window& win) {
  std::size_t best = x.index(n, win.y0, win.x0, c);
  for (long y = win.y0; y < win.y1; ++y)
    for (long xx = win.x0; xx < win.x1; ++xx) {
      const std::size_t i = x.index(n, y, xx, c);
      if (x.data()[i] > x.data()[best]) best = i;
    }
  return best;
}

}  // namespace

template <class T>
Tensor4<T> max_pool(const Tensor4<T>& x, std::size_t p) {
  if (p == 0) throw ValidationError(kModule, "max_pool size must be positive");
  const Shape4 s = x.shape();
  Tensor4<T> y(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t oy = 0; oy < s.h; ++oy)
      for (std::size_t ox = 0; ox < s.w; ++ox) {
        const Window win = pool_window(oy, ox, s.h, s.w, p);
        for (std::size_t c = 0; c < s.c; ++c) y.at(n, oy, ox, c) = x.data()[argmax_in_window(x, n, c, win)];
      }
  return y;
}

template <class T>
Tensor4<T> max_pool_backward(const Tensor4<T>& x, const Tensor4<T>& dy, std::size_t p) {
  const Shape4 s = x.shape();
  Tensor4<T> dx(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t oy = 0; oy < s.h; ++oy)
      for (std::size_t ox = 0; ox < s.w; ++ox) {
        const Window win = pool_window(oy, ox, s.h, s.w, p);
        for (std::size_t c = 0; c < s.c; ++c) dx.data()[argmax_in_window(x, n, c, win)] += dy.at(n, oy, ox, c);
      }
  return dx;
}

template <class T>
Tensor4<T> avg_pool(const Tensor4<T>& x, std::size_t p) {
  if (p == 0) throw ValidationError(kModule, "avg_pool size must be positive");
  const Shape4 s = x.shape();
  const Shape4 os{s.n, (s.h + p - 1) / p, (s.w + p - 1) / p, s.c};
  const T scale = T(1) / static_cast<T>(p * p);
  Tensor4<T> y(os);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t oy = 0; oy < os.h; ++oy)
      for (std::size_t ox = 0; ox < os.w; ++ox) {
        T* out = &y.at(n, oy, ox, 0);
        for (std::size_t iy = oy * p; iy < std::min(oy * p + p, s.h); ++iy)
          for (std::size_t ix = ox * p; ix < std::min(ox * p + p, s.w); ++ix) {
            const T* in = &x.at(n, iy, ix, 0);
            for (std::size_t c = 0; c < s.c; ++c) out[c] += in[c];
          }
        for (std::size_t c = 0; c < s.c; ++c) out[c] *= scale;
      }
  return y;
}

template <class T>
Tensor4<T> avg_pool_backward(const Tensor4<T>& dy, const Shape4& s, std::size_t p) {
  const T scale = T(1) / static_cast<T>(p * p);
  Tensor4<T> dx(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t iy = 0; iy < s.h; ++iy)
      for (std::size_t ix = 0; ix < s.w; ++ix) {
        const T* g = &dy.at(n, iy / p, ix / p, 0);
        T* out = &dx.at(n, iy, ix, 0);
        for (std::size_t c = 0; c < s.c; ++c) out[c] = g[c] * scale;
      }
  return dx;
}

// Structural ops --------------------------------------------------------------

template <class T>
Tensor4<T> concat_channels(std::span<const Tensor4<T>* const> xs) {
  if (xs.empty()) throw ValidationError(kModule, "concat of zero tensors");
  const Shape4 first = xs.front()->shape();
  std::size_t channels = 0;
  for (const auto* x : xs) {
    const Shape4 s = x->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ValidationError(kModule, fmt::format("concat shape mismatch: {} vs {}", to_string(s), to_string(first)));
    }
    channels += s.c;
  }
  Tensor4<T> y({first.n, first.h, first.w, channels});
  const std::size_t positions = first.n * first.h * first.w;
  for (std::size_t pos = 0; pos < positions; ++pos) {
    T* out = y.data() + pos * channels;
    for (const auto* x : xs) {
      const std::size_t c = x->shape().c;
      std::copy_n(x->data() + pos * c, c, out);
      out += c;
    }
  }
  return y;
}

template <class T>
std::vector<Tensor4<T>> split_channels(const Tensor4<T>& dy, std::span<const std::size_t> channels) {
  const Shape4 s = dy.shape();
  std::size_t total = 0;
  for (auto c : channels) total += c;
  if (total != s.c) throw ValidationError(kModule, "split_channels sizes do not add up");
  std::vector<Tensor4<T>> parts;
  parts.reserve(channels.size());
  for (auto c : channels) parts.emplace_back(Shape4{s.n, s.h, s.w, c});
  const std::size_t positions = s.n * s.h * s.w;
  for (std::size_t pos = 0; pos < positions; ++pos) {
    const T* in = dy.data() + pos * s.c;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      std::copy_n(in, channels[i], parts[i].data() + pos * channels[i]);
      in += channels[i];
    }
  }
  return parts;
}

template <class T>
Tensor4<T> crop_center(const Tensor4<T>& x) {
  const Shape4 s = x.shape();
  if (s.h % 2 == 0 || s.w % 2 == 0) {
    throw ValidationError(kModule, fmt::format("crop_center needs odd spatial dims, got {}", to_string(s)));
  }
  Tensor4<T> y({s.n, 1, 1, s.c});
  for (std::size_t n = 0; n < s.n; ++n) std::copy_n(&x.at(n, s.h / 2, s.w / 2, 0), s.c, &y.at(n, 0, 0, 0));
  return y;
}

template <class T>
Tensor4<T> crop_center_backward(const Tensor4<T>& dy, const Shape4& s) {
  Tensor4<T> dx(s);
  for (std::size_t n = 0; n < s.n; ++n) std::copy_n(dy.data() + n * s.c, s.c, &dx.at(n, s.h / 2, s.w / 2, 0));
  return dx;
}

// Dropout ----------------------------------------------------------------------

template <class T>
Dropout<T>::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError(kModule, "dropout rate must be in [0, 1)");
}

template <class T>
Tensor4<T> Dropout<T>::forward(const Tensor4<T>& x, Mode mode, Rng& rng) {
  keep_.assign(x.size(), 1);
  if (mode == Mode::Infer || rate_ == 0.0) return x;
  const T scale = static_cast<T>(1.0 / (1.0 - rate_));
  Tensor4<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    keep_[i] = rng.uniform() >= rate_ ? 1 : 0;
    y.data()[i] = keep_[i] ? x.data()[i] * scale : T(0);
  }
  return y;
}

template <class T>
Tensor4<T> Dropout<T>::backward(const Tensor4<T>& dy) const {
  if (keep_.size() != dy.size()) throw ValidationError(kModule, "dropout backward without a matching forward");
  const T scale = rate_ == 0.0 ? T(1) : static_cast<T>(1.0 / (1.0 - rate_));
  Tensor4<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data()[i] = keep_[i] ? dy.data()[i] * scale : T(0);
  return dx;
}

// Loss -------------------------------------------------------------------------

template <class T>
Tensor4<T> softmax(const Tensor4<T>& logits) {
  const std::size_t rows = logits.shape().n;
  const std::size_t k = logits.shape().per_item();
  Tensor4<T> probs = Tensor4<T>::matrix(rows, k);
  for (std::size_t n = 0; n < rows; ++n) {
    const T* z = logits.data() + n * k;
    T* p = probs.data() + n * k;
    const T zmax = *std::max_element(z, z + k);
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - zmax);
      sum += p[j];
    }
    for (std::size_t j = 0; j < k; ++j) p[j] /= sum;
  }
  return probs;
}

template <class T>
SoftmaxXent<T> softmax_xent(const Tensor4<T>& logits, const Tensor4<T>& targets) {
  const std::size_t rows = logits.shape().n;
  const std::size_t k = logits.shape().per_item();
  if (targets.shape().n != rows || targets.shape().per_item() != k) {
    throw ValidationError(kModule, fmt::format("targets {} do not match logits {}", to_string(targets.shape()),
                                               to_string(logits.shape())));
  }
  if (rows == 0) throw ValidationError(kModule, "softmax_xent on an empty batch");
  SoftmaxXent<T> out;
  out.probs = softmax(logits);
  out.dlogits = Tensor4<T>::matrix(rows, k);
  T total = T(0);
  for (std::size_t n = 0; n < rows; ++n) {
    const T* z = logits.data() + n * k;
    const T* t = targets.data() + n * k;
    std::size_t hot = k;
    for (std::size_t j = 0; j < k; ++j) {
      if (t[j] == T(1) && hot == k) {
        hot = j;
      } else if (t[j] != T(0)) {
        throw ValidationError(kModule, fmt::format("target row {} is not one-hot", n));
      }
    }
    if (hot == k) throw ValidationError(kModule, fmt::format("target row {} is not one-hot", n));
    const T zmax = *std::max_element(z, z + k);
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
    total += std::log(sum) + zmax - z[hot];
    for (std::size_t j = 0; j < k; ++j) {
      out.dlogits.data()[n * k + j] = (out.probs.data()[n * k + j] - t[j]) / static_cast<T>(rows);
    }
  }
  out.loss = total / static_cast<T>(rows);
  return out;
}

template <class T>
T l2_penalty(std::span<Param<T>* const> params, double coeff) {
  if (coeff < 0.0) throw ValidationError(kModule, "l2 coefficient must be non-negative");
  T penalty = T(0);
  if (coeff == 0.0) return penalty;
  const T c = static_cast<T>(coeff);
  for (Param<T>* p : params) {
    if (!p->is_weight) continue;
    T sum = T(0);
    for (std::size_t i = 0; i < p->size(); ++i) {
      sum += p->value[i] * p->value[i];
      p->grad[i] += T(2) * c * p->value[i];
    }
    penalty += c * sum;
  }
  return penalty;
}

template <class T>
T l2_value(std::span<const Param<T>* const> params, double coeff) {
  T penalty = T(0);
  const T c = static_cast<T>(coeff);
  for (const Param<T>* p : params) {
    if (!p->is_weight) continue;
    T sum = T(0);
    for (auto v : p->value) sum += v * v;
    penalty += c * sum;
  }
  return penalty;
}

#define INSTANTIATE(T)                                                                                      \
  template struct Param<T>;                                                                                 \
  template void glorot_uniform<T>(Param<T>&, std::size_t, std::size_t, Rng&);                               \
  template class Conv2D<T>;                                                                                 \
  template class Dense<T>;                                                                                  \
  template class Dropout<T>;                                                                                \
  template Tensor4<T> relu<T>(const Tensor4<T>&);                                                           \
  template Tensor4<T> relu_backward<T>(const Tensor4<T>&, const Tensor4<T>&);                               \
  template Tensor4<T> max_pool<T>(const Tensor4<T>&, std::size_t);                                          \
  template Tensor4<T> max_pool_backward<T>(const Tensor4<T>&, const Tensor4<T>&, std::size_t);              \
  template Tensor4<T> avg_pool<T>(const Tensor4<T>&, std::size_t);                                          \
  template Tensor4<T> avg_pool_backward<T>(const Tensor4<T>&, const Shape4&, std::size_t);                  \
  template Tensor4<T> concat_channels<T>(std::span<const Tensor4<T>* const>);                               \
  template std::vector<Tensor4<T>> split_channels<T>(const Tensor4<T>&, std::span<const std::size_t>);      \
  template Tensor4<T> crop_center<T>(const Tensor4<T>&);                                                    \
  template Tensor4<T> crop_center_backward<T>(const Tensor4<T>&, const Shape4&);                            \
  template Tensor4<T> softmax<T>(const Tensor4<T>&);                                                        \
  template SoftmaxXent<T> softmax_xent<T>(const Tensor4<T>&, const Tensor4<T>&);                            \
  template T l2_penalty<T>(std::span<Param<T>* const>, double);                                             \
  template T l2_value<T>(std::span<const Param<T>* const>, double);

INSTANTIATE(float)
INSTANTIATE(double)

}  // namespace jigsawhsi::nn
