#pragma once

// Convolution and dense kernels in two flavours:
//
//   reference::  plain serial loops, kept as the readable baseline for tests
//                and benchmarks;
//   parallel::   OpenMP versions used by the layers.
//
// Both accumulate every output element in the same order (bias first, then
// ky, kx, cin for convolutions; n, y, x for parameter gradients), so they agree
// bit-for-bit and the parallel result does not depend on the thread count.
//
// Convolutions are stride 1 with zero "same" padding of k/2 on every side.
// Weights are laid out [ky][kx][cin][cout]; dense weights [in][out].
// Parameter-gradient kernels add into dw/db.

#include <cstddef>
#include <span>

#include "jigsawhsi/tensor.hpp"

namespace jigsawhsi::nn::kernels {

namespace reference {

template <class T>
void conv2d_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> b, std::size_t k, Tensor4<T>& y);
template <class T>
void conv2d_backward_input(const Tensor4<T>& dy, std::span<const T> w, std::size_t k, Tensor4<T>& dx);
template <class T>
void conv2d_backward_params(const Tensor4<T>& x, const Tensor4<T>& dy, std::size_t k, std::span<T> dw,
                            std::span<T> db);

template <class T>
void dense_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> b, Tensor4<T>& y);
template <class T>
void dense_backward_input(const Tensor4<T>& dy, std::span<const T> w, Tensor4<T>& dx);
template <class T>
void dense_backward_params(const Tensor4<T>& x, const Tensor4<T>& dy, std::span<T> dw, std::span<T> db);

}  // namespace reference

namespace parallel {

template <class T>
void conv2d_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> b, std::size_t k, Tensor4<T>& y);
template <class T>
void conv2d_backward_input(const Tensor4<T>& dy, std::span<const T> w, std::size_t k, Tensor4<T>& dx);
template <class T>
void conv2d_backward_params(const Tensor4<T>& x, const Tensor4<T>& dy, std::size_t k, std::span<T> dw,
                            std::span<T> db);

template <class T>
void dense_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> b, Tensor4<T>& y);
template <class T>
void dense_backward_input(const Tensor4<T>& dy, std::span<const T> w, Tensor4<T>& dx);
template <class T>
void dense_backward_params(const Tensor4<T>& x, const Tensor4<T>& dy, std::span<T> dw, std::span<T> db);

}  // namespace parallel

/// Throws unless x, y and the weight/bias sizes describe one convolution.
void check_conv_shapes(const Shape4& x, const Shape4& y, std::size_t k, std::size_t w_size, std::size_t b_size);
/// Throws unless x, y and the weight/bias sizes describe one dense layer.
void check_dense_shapes(const Shape4& x, const Shape4& y, std::size_t w_size, std::size_t b_size);

}  // namespace jigsawhsi::nn::kernels
