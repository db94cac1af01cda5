#include "jigsawhsi/tiler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "jigsawhsi/error.hpp"
#include "jigsawhsi/random.hpp"

namespace jigsawhsi {

namespace {

constexpr std::string_view kModule = "tiler";

}  // namespace

TileSet::TileSet(std::size_t window, std::size_t channels, std::size_t num_classes)
    : window_(window), channels_(channels), num_classes_(num_classes), class_counts_(num_classes, 0) {}

TileView TileSet::tile(std::size_t i) const {
  const TileInfo& ti = info_.at(i);
  return {std::span<const float>(data_.data() + i * tile_size(), tile_size()), ti.center_row, ti.center_col,
          ti.label};
}

std::vector<std::uint16_t> TileSet::labels() const {
  std::vector<std::uint16_t> out(info_.size());
  std::transform(info_.begin(), info_.end(), out.begin(), [](const TileInfo& t) { return t.label; });
  return out;
}

void TileSet::push_back(std::span<const float> values, const TileInfo& info) {
  if (values.size() != tile_size()) throw ValidationError(kModule, "tile has the wrong number of values");
  if (info.label == 0 || info.label > num_classes_) {
    throw ValidationError(kModule, fmt::format("tile label {} outside [1, {}]", info.label, num_classes_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  info_.push_back(info);
  ++class_counts_[info.label - 1];
}

TileSet TileSet::subset(std::span<const std::size_t> indices) const {
  TileSet out(window_, channels_, num_classes_);
  out.data_.reserve(indices.size() * tile_size());
  out.info_.reserve(indices.size());
  for (std::size_t i : indices) {
    const TileView v = tile(i);
    out.push_back(v.data, info_[i]);
  }
  return out;
}

void extract_tile(const HSICube& cube, std::size_t row, std::size_t col, std::size_t window, std::span<float> out) {
  const std::size_t bands = cube.bands;
  if (out.size() != window * window * bands) throw ValidationError(kModule, "tile buffer has the wrong size");
  const long half = static_cast<long>(window / 2);
  std::fill(out.begin(), out.end(), 0.0f);
  for (std::size_t ty = 0; ty < window; ++ty) {
    const long r = static_cast<long>(row) + static_cast<long>(ty) - half;
    if (r < 0 || r >= static_cast<long>(cube.height)) continue;
    for (std::size_t tx = 0; tx < window; ++tx) {
      const long c = static_cast<long>(col) + static_cast<long>(tx) - half;
      if (c < 0 || c >= static_cast<long>(cube.width)) continue;
      float* cell = out.data() + (ty * window + tx) * bands;
      for (std::size_t b = 0; b < bands; ++b) cell[b] = cube.at(r, c, b);
    }
  }
}

TileSet build_dataset(const HSICube& cube, const LabelRaster& labels, std::size_t window) {
  if (window == 0 || window % 2 == 0) {
    throw ValidationError(kModule, fmt::format("window size must be odd, got {}", window));
  }
  if (cube.height != labels.height || cube.width != labels.width) {
    throw ValidationError(kModule, fmt::format("cube is {}x{} but labels are {}x{}", cube.height, cube.width,
                                               labels.height, labels.width));
  }
  std::vector<std::size_t> pixels;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    if (labels.labels[i] != 0) pixels.push_back(i);
  }
  if (pixels.empty()) throw ValidationError(kModule, "no labeled pixels to tile");

  const std::size_t tile_size = window * window * cube.bands;
  std::vector<float> buffer(pixels.size() * tile_size);
  const long count = static_cast<long>(pixels.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < count; ++i) {
    const std::size_t p = pixels[i];
    extract_tile(cube, p / cube.width, p % cube.width, window,
                 std::span<float>(buffer.data() + i * static_cast<long>(tile_size), tile_size));
  }

  TileSet tiles(window, cube.bands, labels.num_classes);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const std::size_t p = pixels[i];
    tiles.push_back(std::span<const float>(buffer.data() + i * tile_size, tile_size),
                    TileInfo{p / cube.width, p % cube.width, labels.labels[p]});
  }
  return tiles;
}

SplitIndices split_indices(std::span<const std::uint16_t> labels, std::size_t num_classes, double train_frac,
                           std::uint64_t seed, bool stratified) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw ValidationError(kModule, fmt::format("train_frac must be in (0, 1), got {}", train_frac));
  }
  // ceil with a guard so that e.g. 0.3 * 100 = 30.000000000000004 stays 30
  auto take = [train_frac](std::size_t n) {
    return static_cast<std::size_t>(std::ceil(train_frac * static_cast<double>(n) - 1e-9));
  };
  std::vector<std::vector<std::size_t>> groups(stratified ? num_classes : 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0 || labels[i] > num_classes) {
      throw ValidationError(kModule, fmt::format("label {} outside [1, {}]", labels[i], num_classes));
    }
    groups[stratified ? labels[i] - 1 : 0].push_back(i);
  }
  SplitIndices out;
  Rng rng(seed);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& members = groups[g];
    if (members.empty()) {
      throw ValidationError(kModule, stratified ? fmt::format("class {} has no tiles", g + 1)
                                                : std::string("no tiles to split"));
    }
    rng.shuffle(std::span<std::size_t>(members));
    const std::size_t n_train = take(members.size());
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

TileSplit stratified_split(const TileSet& tiles, double train_frac, std::uint64_t seed, bool stratified) {
  const auto labels = tiles.labels();
  const SplitIndices idx = split_indices(labels, tiles.num_classes(), train_frac, seed, stratified);
  return {tiles.subset(idx.train), tiles.subset(idx.test)};
}

std::vector<float> one_hot(std::uint16_t label, std::size_t num_classes) {
  if (label == 0 || label > num_classes) {
    throw ValidationError(kModule, fmt::format("label {} outside [1, {}]", label, num_classes));
  }
  std::vector<float> v(num_classes, 0.0f);
  v[label - 1] = 1.0f;
  return v;
}

std::vector<std::vector<std::size_t>> batch_plan(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                 std::size_t epoch) {
  if (batch_size == 0) throw ValidationError(kModule, "batch size must be positive");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> plan;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                      order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

Batch make_batch(const TileSet& tiles, std::span<const std::size_t> indices) {
  const std::size_t s = tiles.window();
  const std::size_t k = tiles.num_classes();
  Batch batch;
  batch.inputs = nn::Tensor4<float>({indices.size(), s, s, tiles.channels()});
  batch.targets = nn::Tensor4<float>::matrix(indices.size(), k);
  batch.indices.assign(indices.begin(), indices.end());
  batch.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const TileView v = tiles.tile(indices[i]);
    std::copy(v.data.begin(), v.data.end(), batch.inputs.item(i).begin());
    batch.targets.data()[i * k + (v.label - 1)] = 1.0f;
    batch.labels.push_back(v.label);
  }
  return batch;
}

std::vector<Batch> batch_iter(const TileSet& tiles, std::size_t batch_size, std::uint64_t shuffle_seed,
                              std::size_t epoch) {
  std::vector<Batch> out;
  for (const auto& group : batch_plan(tiles.size(), batch_size, shuffle_seed, epoch)) {
    out.push_back(make_batch(tiles, group));
  }
  return out;
}

}  // namespace jigsawhsi
