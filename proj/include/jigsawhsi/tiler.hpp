#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "jigsawhsi/hsi_io.hpp"
#include "jigsawhsi/tensor.hpp"

namespace jigsawhsi {

struct TileInfo {
  std::size_t center_row = 0;
  std::size_t center_col = 0;
  std::uint16_t label = 0;
};

/// Read-only view of one S x S x c tile (row, col, channel order).
struct TileView {
  std::span<const float> data;
  std::size_t center_row = 0;
  std::size_t center_col = 0;
  std::uint16_t label = 0;
};

/// Tiles sharing (S, c), stored contiguously in NHWC order.
class TileSet {
 public:
  TileSet() = default;
  TileSet(std::size_t window, std::size_t channels, std::size_t num_classes);

  std::size_t window() const { return window_; }
  std::size_t channels() const { return channels_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return info_.size(); }
  bool empty() const { return info_.empty(); }
  std::size_t tile_size() const { return window_ * window_ * channels_; }

  TileView tile(std::size_t i) const;
  const std::vector<TileInfo>& info() const { return info_; }
  const std::vector<float>& data() const { return data_; }
  /// Tile count per class; index k-1 holds class k.
  const std::vector<std::size_t>& class_counts() const { return class_counts_; }
  std::vector<std::uint16_t> labels() const;

  /// Appends one tile; `values` must hold tile_size() floats.
  void push_back(std::span<const float> values, const TileInfo& info);

  /// Tiles at the given indices, in that order.
  TileSet subset(std::span<const std::size_t> indices) const;

 private:
  std::size_t window_ = 0;
  std::size_t channels_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<float> data_;
  std::vector<TileInfo> info_;
  std::vector<std::size_t> class_counts_;
};

/// Copies the S x S window centred on (row, col) into `out` (S*S*bands
/// floats, NHWC), zero-filling cells outside the raster.
void extract_tile(const HSICube& cube, std::size_t row, std::size_t col, std::size_t window, std::span<float> out);

/// One tile per labeled pixel, in row-major raster order.
TileSet build_dataset(const HSICube& cube, const LabelRaster& labels, std::size_t window);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class (or globally when !stratified), ceil(train_frac * n) items drawn
/// uniformly under `seed` go to train. Both lists are sorted ascending.
SplitIndices split_indices(std::span<const std::uint16_t> labels, std::size_t num_classes, double train_frac,
                           std::uint64_t seed, bool stratified = true);

struct TileSplit {
  TileSet train;
  TileSet test;
};

TileSplit stratified_split(const TileSet& tiles, double train_frac, std::uint64_t seed, bool stratified = true);

std::vector<float> one_hot(std::uint16_t label, std::size_t num_classes);

struct Batch {
  nn::Tensor4<float> inputs;   ///< (N, S, S, c)
  nn::Tensor4<float> targets;  ///< (N, 1, 1, K) one-hot
  std::vector<std::uint16_t> labels;
  std::vector<std::size_t> indices;  ///< positions in the source TileSet
};

/// Index groups for one epoch: a permutation seeded by (seed, epoch), cut into
/// batch_size chunks; the last chunk may be short.
std::vector<std::vector<std::size_t>> batch_plan(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                 std::size_t epoch);

Batch make_batch(const TileSet& tiles, std::span<const std::size_t> indices);

/// All batches of one epoch.
std::vector<Batch> batch_iter(const TileSet& tiles, std::size_t batch_size, std::uint64_t shuffle_seed,
                              std::size_t epoch);

}  // namespace jigsawhsi
