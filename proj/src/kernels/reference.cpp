#include "jigsawhsi/kernels.hpp"

namespace jigsawhsi::nn::kernels::reference {

template <class T>
void conv2d_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> b, std::size_t k, Tensor4<T>& y) {
  const Shape4 xs = x.shape();
  const Shape4 ys = y.shape();
  check_conv_shapes(xs, ys, k, w.size(), b.size());
  const long pad = static_cast<long>(k / 2);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t oy = 0; oy < xs.h; ++oy)
      for (std::size_t ox = 0; ox < xs.w; ++ox)
        for (std::size_t co = 0; co < ys.c; ++co) {
          T sum = b[co];
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long iy = static_cast<long>(oy + ky) - pad;
            if (iy < 0 || iy >= static_cast<long>(xs.h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long ix = static_cast<long>(ox + kx) - pad;
              if (ix < 0 || ix >= static_cast<long>(xs.w)) continue;
              for (std::size_t ci = 0; ci < xs.c; ++ci) {
                sum += x.at(n, iy, ix, ci) * w[((ky * k + kx) * xs.c + ci) * ys.c + co];
              }
            }
          }
          y.at(n, oy, ox, co) = sum;
        }
}

template <class T>
void conv2d_backward_input(const Tensor4<T>& dy, std::span<const T> w, std::size_t k, Tensor4<T>& dx) {
  const Shape4 xs = dx.shape();
  const Shape4 ys = dy.shape();
  check_conv_shapes(xs, ys, k, w.size(), ys.c);
  const long pad = static_cast<long>(k / 2);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t iy = 0; iy < xs.h; ++iy)
      for (std::size_t ix = 0; ix < xs.w; ++ix)
        for (std::size_t ci = 0; ci < xs.c; ++ci) {
          T sum = T(0);
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long oy = static_cast<long>(iy) - static_cast<long>(ky) + pad;
            if (oy < 0 || oy >= static_cast<long>(xs.h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long ox = static_cast<long>(ix) - static_cast<long>(kx) + pad;
              if (ox < 0 || ox >= static_cast<long>(xs.w)) continue;
              for (std::size_t co = 0; co < ys.c; ++co) {
                sum += dy.at(n, oy, ox, co) * w[((ky * k + kx) * xs.c + ci) * ys.c + co];
              }
            }
          }
          dx.at(n, iy, ix, ci) = sum;
        }
}

template <class T>
void conv2d_backward_params(const Tensor4<T>& x, const Tensor4<T>& dy, std::size_t k, std::span<T> dw,
                            std::span<T> db) {
  const Shape4 xs = x.shape();
  const Shape4 ys = dy.shape();
  check_conv_shapes(xs, ys, k, dw.size(), db.size());
  const long pad = static_cast<long>(k / 2);
  for (std::size_t ky = 0; ky < k; ++ky)
    for (std::size_t kx = 0; kx < k; ++kx)
      for (std::size_t ci = 0; ci < xs.c; ++ci)
        for (std::size_t co = 0; co < ys.c; ++co) {
          T sum = T(0);
          for (std::size_t n = 0; n < xs.n; ++n)
            for (std::size_t oy = 0; oy < xs.h; ++oy) {
              const long iy = static_cast<long>(oy + ky) - pad;
              if (iy < 0 || iy >= static_cast<long>(xs.h)) continue;
              for (std::size_t ox = 0; ox < xs.w; ++ox) {
                const long ix = static_cast<long>(ox + kx) - pad;
                if (ix < 0 || ix >= static_cast<long>(xs.w)) continue;
                sum += x.at(n, iy, ix, ci) * dy.at(n, oy, ox, co);
              }
            }
          dw[((ky * k + kx) * xs.c + ci) * ys.c + co] += sum;
        }
  for (std::size_t co = 0; co < ys.c; ++co) {
    T sum = T(0);
    for (std::size_t n = 0; n < ys.n; ++n)
      for (std::size_t oy = 0; oy < ys.h; ++oy)
        for (std::size_t ox = 0; ox < ys.w; ++ox) sum += dy.at(n, oy, ox, co);
    db[co] += sum;
  }
}

template <class T>
void dense_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> b, Tensor4<T>& y) {
  check_dense_shapes(x.shape(), y.shape(), w.size(), b.size());
  const std::size_t in = x.shape().c;
  const std::size_t out = y.shape().c;
  for (std::size_t n = 0; n < x.shape().n; ++n)
    for (std::size_t u = 0; u < out; ++u) {
      T sum = b[u];
      for (std::size_t f = 0; f < in; ++f) sum += x.data()[n * in + f] * w[f * out + u];
      y.data()[n * out + u] = sum;
    }
}

template <class T>
void dense_backward_input(const Tensor4<T>& dy, std::span<const T> w, Tensor4<T>& dx) {
  check_dense_shapes(dx.shape(), dy.shape(), w.size(), dy.shape().c);
  const std::size_t in = dx.shape().c;
  const std::size_t out = dy.shape().c;
  for (std::size_t n = 0; n < dy.shape().n; ++n)
    for (std::size_t f = 0; f < in; ++f) {
      T sum = T(0);
      for (std::size_t u = 0; u < out; ++u) sum += dy.data()[n * out + u] * w[f * out + u];
      dx.data()[n * in + f] = sum;
    }
}

template <class T>
void dense_backward_params(const Tensor4<T>& x, const Tensor4<T>& dy, std::span<T> dw, std::span<T> db) {
  check_dense_shapes(x.shape(), dy.shape(), dw.size(), db.size());
  const std::size_t in = x.shape().c;
  const std::size_t out = dy.shape().c;
  for (std::size_t f = 0; f < in; ++f)
    for (std::size_t u = 0; u < out; ++u) {
      T sum = T(0);
      for (std::size_t n = 0; n < x.shape().n; ++n) sum += x.data()[n * in + f] * dy.data()[n * out + u];
      dw[f * out + u] += sum;
    }
  for (std::size_t u = 0; u < out; ++u) {
    T sum = T(0);
    for (std::size_t n = 0; n < dy.shape().n; ++n) sum += dy.data()[n * out + u];
    db[u] += sum;
  }
}

#define INSTANTIATE(T)                                                                                         \
  template void conv2d_forward<T>(const Tensor4<T>&, std::span<const T>, std::span<const T>, std::size_t,      \
                                  Tensor4<T>&);                                                                \
  template void conv2d_backward_input<T>(const Tensor4<T>&, std::span<const T>, std::size_t, Tensor4<T>&);     \
  template void conv2d_backward_params<T>(const Tensor4<T>&, const Tensor4<T>&, std::size_t, std::span<T>,     \
                                          std::span<T>);                                                       \
  template void dense_forward<T>(const Tensor4<T>&, std::span<const T>, std::span<const T>, Tensor4<T>&);      \
  template void dense_backward_input<T>(const Tensor4<T>&, std::span<const T>, Tensor4<T>&);                   \
  template void dense_backward_params<T>(const Tensor4<T>&, const Tensor4<T>&, std::span<T>, std::span<T>);

INSTANTIATE(float)
INSTANTIATE(double)

}  // namespace jigsawhsi::nn::kernels::reference
