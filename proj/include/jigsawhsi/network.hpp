#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "jigsawhsi/layers.hpp"
#include "jigsawhsi/raster_header.hpp"

namespace jigsawhsi {

/// Declarative description of the network:
///
///   input (S x S x c)
///     -> [optional hsi 1x1 conv] -> [module A: 1x1 convs]         = trunk
///   module B: one branch per odd k in 1..n (optional 1x1 reduce, k x k conv,
///             optional 1x1 project) plus a max-pool branch (optional project),
///             concatenated, average pooled, flattened
///   module C: centre pixel of the trunk, flattened (when crop is enabled)
///   module D: concat(B, C) -> dense+relu+dropout -> dense+relu+dropout -> dense -> softmax
///
/// Every conv and hidden dense layer is followed by relu.
struct NetworkSpec {
  std::size_t window = 0;    ///< tile side S (odd)
  std::size_t channels = 0;  ///< input channels c
  std::optional<std::size_t> hsi_filters;
  std::vector<std::size_t> module_a;
  std::size_t max_filter_size = 1;  ///< largest pyramid kernel n (odd)
  std::size_t branch_units = 64;
  std::optional<std::size_t> nin_before;
  std::optional<std::size_t> nin_after;
  std::size_t max_pool_size = 3;
  std::size_t avg_pool_size = 2;
  bool crop_enabled = true;
  std::array<std::size_t, 2> dense_units{256, 128};
  double dropout_rate = 0.4;
  std::size_t num_classes = 0;

  /// Throws ValidationError when an invariant fails.
  void validate() const;

  /// Kernel sizes of the convolutional pyramid branches: 1, 3, ..., n.
  std::vector<std::size_t> branch_kernels() const;
  /// Channels leaving the trunk (input to modules B and C).
  std::size_t trunk_channels() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Writes/reads the spec as header keys (prefixed "net.").
void spec_to_header(const NetworkSpec& spec, RasterHeader& header);
NetworkSpec spec_from_header(const RasterHeader& header);

template <class T>
class Model {
 public:
  using Tensor = nn::Tensor4<T>;

  struct Loss {
    T cross_entropy = T(0);
    T penalty = T(0);
    T total() const { return cross_entropy + penalty; }
  };

  Model(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }

  /// Class probabilities (N, 1, 1, K). Train mode applies dropout and caches
  /// activations for backward().
  Tensor forward(const Tensor& batch, nn::Mode mode, Rng& rng);

  /// Inference-mode forward without caching; safe to call concurrently.
  Tensor predict(const Tensor& batch) const;

  /// Zeroes the accumulators, then fills them with d(xent + l2)/d(params)
  /// for the last train-mode forward.
  Loss backward(const Tensor& targets, double l2_coeff);

  /// Loss of one forward pass without touching gradients or the cache.
  Loss objective(const Tensor& batch, const Tensor& targets, nn::Mode mode, Rng& rng, double l2_coeff) const;

  /// Module B output before average pooling (concatenated branches).
  Tensor pyramid(const Tensor& batch) const;

  std::vector<nn::Param<T>*> parameters();
  std::vector<const nn::Param<T>*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  struct Branch {
    std::size_t pool = 0;  ///< max-pool size, 0 for convolutional branches
    std::vector<nn::Conv2D<T>> convs;
  };

  struct BranchCache {
    Tensor pooled;
    std::vector<Tensor> outputs;
  };

  struct Cache {
    Tensor input;
    std::vector<Tensor> trunk;
    std::vector<BranchCache> branches;
    nn::Shape4 pyramid_shape;
    nn::Shape4 pooled_shape;
    std::size_t left_features = 0;
    Tensor features, hidden1, dropped1, hidden2, dropped2, logits;
    nn::Dropout<T> drop1, drop2;
    bool valid = false;
  };

  /// Logits; train mode needs rng and cache.
  Tensor run(const Tensor& batch, nn::Mode mode, Rng* rng, Cache* cache) const;
  Tensor run_trunk(const Tensor& batch, Cache* cache) const;
  Tensor run_pyramid(const Tensor& trunk, Cache* cache) const;
  void check_batch(const Tensor& batch) const;

  NetworkSpec spec_;
  std::vector<nn::Conv2D<T>> trunk_;
  std::vector<Branch> branches_;
  nn::Dense<T> dense1_, dense2_, head_;
  Cache cache_;
};

extern template class Model<float>;
extern template class Model<double>;

/// Header + float32 payload: the spec echo, then every parameter array in
/// topological order.
void save_checkpoint(const Model<float>& model, const std::filesystem::path& header_path);
Model<float> load_checkpoint(const std::filesystem::path& header_path);

}  // namespace jigsawhsi
