#include <vector>

#include "jigsawhsi/kernels.hpp"

namespace jigsawhsi::nn::kernels::parallel {

namespace {

/// [ky][kx][cin][cout] -> [ky][kx][cout][cin]
template <class T>
std::vector<T> swap_channel_axes(std::span<const T> w, std::size_t k, std::size_t cin, std::size_t cout) {
  std::vector<T> out(w.size());
  for (std::size_t t = 0; t < k * k; ++t)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t co = 0; co < cout; ++co) out[(t * cout + co) * cin + ci] = w[(t * cin + ci) * cout + co];
  return out;
}

}  // namespace

template <class T>
void conv2d_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> b, std::size_t k, Tensor4<T>& y) {
  const Shape4 xs = x.shape();
  const std::size_t cout = y.shape().c;
  check_conv_shapes(xs, y.shape(), k, w.size(), b.size());
  const long pad = static_cast<long>(k / 2);
  const long h = static_cast<long>(xs.h);
  const long wd = static_cast<long>(xs.w);
  const long rows = static_cast<long>(xs.n) * h;

#pragma omp parallel for schedule(static)
  for (long row = 0; row < rows; ++row) {
    const std::size_t n = static_cast<std::size_t>(row / h);
    const long oy = row % h;
    for (long ox = 0; ox < wd; ++ox) {
      T* out = &y.at(n, oy, ox, 0);
      for (std::size_t co = 0; co < cout; ++co) out[co] = b[co];
      for (long ky = 0; ky < static_cast<long>(k); ++ky) {
        const long iy = oy + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (long kx = 0; kx < static_cast<long>(k); ++kx) {
          const long ix = ox + kx - pad;
          if (ix < 0 || ix >= wd) continue;
          const T* in = &x.at(n, iy, ix, 0);
          const T* wk = w.data() + (ky * static_cast<long>(k) + kx) * static_cast<long>(xs.c * cout);
          for (std::size_t ci = 0; ci < xs.c; ++ci) {
            const T v = in[ci];
            const T* wr = wk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) out[co] += v * wr[co];
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_input(const Tensor4<T>& dy, std::span<const T> w, std::size_t k, Tensor4<T>& dx) {
  const Shape4 xs = dx.shape();
  const std::size_t cout = dy.shape().c;
  check_conv_shapes(xs, dy.shape(), k, w.size(), cout);
  const std::vector<T> wt = swap_channel_axes(w, k, xs.c, cout);
  const long pad = static_cast<long>(k / 2);
  const long h = static_cast<long>(xs.h);
  const long wd = static_cast<long>(xs.w);
  const long rows = static_cast<long>(xs.n) * h;

#pragma omp parallel for schedule(static)
  for (long row = 0; row < rows; ++row) {
    const std::size_t n = static_cast<std::size_t>(row / h);
    const long iy = row % h;
    for (long ix = 0; ix < wd; ++ix) {
      T* out = &dx.at(n, iy, ix, 0);
      for (std::size_t ci = 0; ci < xs.c; ++ci) out[ci] = T(0);
      for (long ky = 0; ky < static_cast<long>(k); ++ky) {
        const long oy = iy - ky + pad;
        if (oy < 0 || oy >= h) continue;
        for (long kx = 0; kx < static_cast<long>(k); ++kx) {
          const long ox = ix - kx + pad;
          if (ox < 0 || ox >= wd) continue;
          const T* g = &dy.at(n, oy, ox, 0);
          const T* wk = wt.data() + (ky * static_cast<long>(k) + kx) * static_cast<long>(xs.c * cout);
          for (std::size_t co = 0; co < cout; ++co) {
            const T v = g[co];
            const T* wr = wk + co * xs.c;
            for (std::size_t ci = 0; ci < xs.c; ++ci) out[ci] += v * wr[ci];
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_params(const Tensor4<T>& x, const Tensor4<T>& dy, std::size_t k, std::span<T> dw,
                            std::span<T> db) {
  const Shape4 xs = x.shape();
  const std::size_t cout = dy.shape().c;
  check_conv_shapes(xs, dy.shape(), k, dw.size(), db.size());
  const long pad = static_cast<long>(k / 2);
  const long h = static_cast<long>(xs.h);
  const long wd = static_cast<long>(xs.w);
  const long taps = static_cast<long>(k * k * xs.c);

#pragma omp parallel
  {
    std::vector<T> acc(cout);
#pragma omp for schedule(static)
    for (long tap = 0; tap < taps; ++tap) {
      const long ci = tap % static_cast<long>(xs.c);
      const long kk = tap / static_cast<long>(xs.c);
      const long ky = kk / static_cast<long>(k);
      const long kx = kk % static_cast<long>(k);
      std::fill(acc.begin(), acc.end(), T(0));
      for (std::size_t n = 0; n < xs.n; ++n)
        for (long oy = 0; oy < h; ++oy) {
          const long iy = oy + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (long ox = 0; ox < wd; ++ox) {
            const long ix = ox + kx - pad;
            if (ix < 0 || ix >= wd) continue;
            const T v = x.at(n, iy, ix, ci);
            const T* g = &dy.at(n, oy, ox, 0);
            for (std::size_t co = 0; co < cout; ++co) acc[co] += v * g[co];
          }
        }
      T* out = dw.data() + tap * static_cast<long>(cout);
      for (std::size_t co = 0; co < cout; ++co) out[co] += acc[co];
    }
  }

  std::vector<T> bias_acc(cout, T(0));
  const std::size_t positions = xs.n * xs.h * xs.w;
  for (std::size_t p = 0; p < positions; ++p) {
    const T* g = dy.data() + p * cout;
    for (std::size_t co = 0; co < cout; ++co) bias_acc[co] += g[co];
  }
  for (std::size_t co = 0; co < cout; ++co) db[co] += bias_acc[co];
}

template <class T>
void dense_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> b, Tensor4<T>& y) {
  check_dense_shapes(x.shape(), y.shape(), w.size(), b.size());
  const std::size_t in = x.shape().c;
  const std::size_t out = y.shape().c;
  const long batch = static_cast<long>(x.shape().n);

#pragma omp parallel for schedule(static)
  for (long n = 0; n < batch; ++n) {
    const T* xr = x.data() + n * static_cast<long>(in);
    T* yr = y.data() + n * static_cast<long>(out);
    for (std::size_t u = 0; u < out; ++u) yr[u] = b[u];
    for (std::size_t f = 0; f < in; ++f) {
      const T v = xr[f];
      const T* wr = w.data() + f * out;
      for (std::size_t u = 0; u < out; ++u) yr[u] += v * wr[u];
    }
  }
}

template <class T>
void dense_backward_input(const Tensor4<T>& dy, std::span<const T> w, Tensor4<T>& dx) {
  check_dense_shapes(dx.shape(), dy.shape(), w.size(), dy.shape().c);
  const std::size_t in = dx.shape().c;
  const std::size_t out = dy.shape().c;
  std::vector<T> wt(w.size());
  for (std::size_t f = 0; f < in; ++f)
    for (std::size_t u = 0; u < out; ++u) wt[u * in + f] = w[f * out + u];
  const long batch = static_cast<long>(dy.shape().n);

#pragma omp parallel for schedule(static)
  for (long n = 0; n < batch; ++n) {
    const T* g = dy.data() + n * static_cast<long>(out);
    T* xr = dx.data() + n * static_cast<long>(in);
    for (std::size_t f = 0; f < in; ++f) xr[f] = T(0);
    for (std::size_t u = 0; u < out; ++u) {
      const T v = g[u];
      const T* wr = wt.data() + u * in;
      for (std::size_t f = 0; f < in; ++f) xr[f] += v * wr[f];
    }
  }
}

template <class T>
void dense_backward_params(const Tensor4<T>& x, const Tensor4<T>& dy, std::span<T> dw, std::span<T> db) {
  check_dense_shapes(x.shape(), dy.shape(), dw.size(), db.size());
  const std::size_t in = x.shape().c;
  const std::size_t out = dy.shape().c;
  const std::size_t batch = x.shape().n;

#pragma omp parallel
  {
    std::vector<T> acc(out);
#pragma omp for schedule(static)
    for (long f = 0; f < static_cast<long>(in); ++f) {
      std::fill(acc.begin(), acc.end(), T(0));
      for (std::size_t n = 0; n < batch; ++n) {
        const T v = x.data()[n * in + f];
        const T* g = dy.data() + n * out;
        for (std::size_t u = 0; u < out; ++u) acc[u] += v * g[u];
      }
      T* wr = dw.data() + f * static_cast<long>(out);
      for (std::size_t u = 0; u < out; ++u) wr[u] += acc[u];
    }
  }

  std::vector<T> bias_acc(out, T(0));
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t u = 0; u < out; ++u) bias_acc[u] += dy.data()[n * out + u];
  for (std::size_t u = 0; u < out; ++u) db[u] += bias_acc[u];
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

}  // namespace jigsawhsi::nn::kernels::parallel
