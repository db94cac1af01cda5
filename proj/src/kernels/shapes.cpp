#include "jigsawhsi/kernels.hpp"

namespace jigsawhsi::nn::kernels {

void check_conv_shapes(const Shape4& x, const Shape4& y, std::size_t k, std::size_t w_size, std::size_t b_size) {
  if (k % 2 == 0) throw ValidationError("autodiff-nn", fmt::format("conv kernel size {} must be odd", k));
  if (x.n != y.n || x.h != y.h || x.w != y.w) {
    throw ValidationError("autodiff-nn", fmt::format("conv output {} does not match input {} under same padding",
                                                     to_string(y), to_string(x)));
  }
  if (w_size != k * k * x.c * y.c) {
    throw ValidationError("autodiff-nn", fmt::format("channel mismatch: {}x{} kernel with {} weights cannot map {} "
                                                     "to {} channels",
                                                     k, k, w_size, x.c, y.c));
  }
  if (b_size != y.c) throw ValidationError("autodiff-nn", "conv bias size does not match output channels");
}

void check_dense_shapes(const Shape4& x, const Shape4& y, std::size_t w_size, std::size_t b_size) {
  if (x.h != 1 || x.w != 1 || y.h != 1 || y.w != 1) {
    throw ValidationError("autodiff-nn", "dense layers take (N, 1, 1, F) tensors; flatten first");
  }
  if (x.n != y.n) throw ValidationError("autodiff-nn", "dense batch size mismatch");
  if (w_size != x.c * y.c) {
    throw ValidationError("autodiff-nn", fmt::format("dense weight has {} values, expected {}x{}", w_size, x.c, y.c));
  }
  if (b_size != y.c) throw ValidationError("autodiff-nn", "dense bias size does not match output units");
}

}  // namespace jigsawhsi::nn::kernels
