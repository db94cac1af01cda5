#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "jigsawhsi/error.hpp"
#include "jigsawhsi/tiler.hpp"
#include "support.hpp"

using namespace jigsawhsi;

namespace {

LabelRaster random_labels(std::size_t h, std::size_t w, std::size_t k, Rng& rng, double labeled = 0.8) {
  std::vector<std::uint16_t> v(h * w, 0);
  for (auto& x : v)
    if (rng.uniform() < labeled) x = static_cast<std::uint16_t>(1 + rng.below(k));
  return LabelRaster(h, w, v);
}

// Value of tile cell (y, x, ch) for tile i.
float cell(const TileSet& ts, std::size_t i, std::size_t y, std::size_t x, std::size_t ch) {
  const std::size_t s = ts.window(), c = ts.channels();
  return ts.tile(i).data[(y * s + x) * c + ch];
}

}  // namespace

TEST_CASE("5x5 fully labeled cube, S=3: 25 tiles, corner tile has 5 padded cells") {
  HSICube cube(5, 5, 1);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) cube.at(r, c, 0) = static_cast<float>(1 + r * 5 + c);  // all nonzero
  const LabelRaster labels(5, 5, std::vector<std::uint16_t>(25, 1));
  const TileSet ts = build_dataset(cube, labels, 3);
  CHECK(ts.size() == 25);
  const auto corner = ts.tile(0);
  CHECK(corner.center_row == 0);
  CHECK(corner.center_col == 0);
  CHECK(std::count(corner.data.begin(), corner.data.end(), 0.0f) == 5);
  const auto centre = ts.tile(12);
  CHECK(std::count(centre.data.begin(), centre.data.end(), 0.0f) == 0);
}

TEST_CASE("2x2 labels [0,1,1,2], S=1: three tiles with class counts {2, 1}") {
  HSICube cube(2, 2, 3, 1.0f);
  const LabelRaster labels(2, 2, {0, 1, 1, 2});
  const TileSet ts = build_dataset(cube, labels, 1);
  CHECK(ts.size() == 3);
  CHECK(ts.class_counts() == std::vector<std::size_t>{2, 1});
  CHECK(ts.tile(0).center_row == 0);
  CHECK(ts.tile(0).center_col == 1);
  CHECK(ts.tile(2).label == 2);
}

TEST_CASE("every tile is the padded window around its centre pixel") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    const HSICube cube = testing::random_cube(11, 13, 3, rng);
    const LabelRaster labels = random_labels(11, 13, 4, rng);
    const std::size_t S = 5;
    const TileSet ts = build_dataset(cube, labels, S);
    CHECK(ts.size() == labels.labeled_count());

    std::size_t sum = 0;
    for (auto n : ts.class_counts()) sum += n;
    CHECK(sum == ts.size());

    std::size_t prev = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const auto t = ts.tile(i);
      const std::size_t flat = t.center_row * 13 + t.center_col;
      if (i > 0) CHECK(flat > prev);  // row-major scan
      prev = flat;
      CHECK(t.label == labels.at(t.center_row, t.center_col));
      CHECK(t.label != 0);
      bool inside = true;
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
          const long r = static_cast<long>(t.center_row + y) - 2;
          const long c = static_cast<long>(t.center_col + x) - 2;
          const bool in = r >= 0 && c >= 0 && r < 11 && c < 13;
          if (!in) inside = false;
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const float expected =
                in ? cube.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch) : 0.0f;
            CHECK(cell(ts, i, y, x, ch) == expected);
          }
        }
      if (inside) {
        // Interior windows carry no padded zeros (cube values are continuous draws).
        CHECK(std::count(t.data.begin(), t.data.end(), 0.0f) == 0);
      }
    }
  }
}

TEST_CASE("build_dataset preconditions") {
  HSICube cube(4, 4, 2, 1.0f);
  const LabelRaster labels(4, 4, std::vector<std::uint16_t>(16, 1));
  CHECK_THROWS_AS(build_dataset(cube, labels, 2), ValidationError);
  CHECK_THROWS_AS(build_dataset(cube, LabelRaster(4, 4, std::vector<std::uint16_t>(16, 0)), 3), ValidationError);
  CHECK_THROWS_AS(build_dataset(cube, LabelRaster(3, 4, std::vector<std::uint16_t>(12, 1)), 3), ValidationError);
}

TEST_CASE("split: ceil rule per class, disjoint, complete, deterministic") {
  std::vector<std::uint16_t> labels;
  for (int i = 0; i < 14; ++i) labels.push_back(1);
  for (int i = 0; i < 100; ++i) labels.push_back(2);
  for (int i = 0; i < 7; ++i) labels.push_back(3);
  Rng rng(4);
  rng.shuffle(std::span<std::uint16_t>(labels));

  const SplitIndices s = split_indices(labels, 3, 0.3, 99);
  std::map<std::uint16_t, std::size_t> train_counts;
  for (auto i : s.train) ++train_counts[labels[i]];
  CHECK(train_counts[1] == 5);   // ceil(0.3 * 14) = ceil(4.2)
  CHECK(train_counts[2] == 30);  // exactly 30/70
  CHECK(train_counts[3] == 3);   // ceil(2.1)
  CHECK(s.train.size() + s.test.size() == labels.size());
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (auto i : s.test) CHECK(all.insert(i).second);
  CHECK(all.size() == labels.size());
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));

  const SplitIndices again = split_indices(labels, 3, 0.3, 99);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK(split_indices(labels, 3, 0.3, 100).train != s.train);
}

TEST_CASE("split property: per-class proportions within one tile of train_frac") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::size_t k = 2 + rng.below(5);
    std::vector<std::uint16_t> labels(20 + rng.below(300));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint16_t>(1 + i % k);
    rng.shuffle(std::span<std::uint16_t>(labels));
    const double frac = rng.uniform(0.05, 0.95);
    const SplitIndices s = split_indices(labels, k, frac, seed);
    std::vector<double> n(k + 1, 0.0), t(k + 1, 0.0);
    for (auto v : labels) ++n[v];
    for (auto i : s.train) ++t[labels[i]];
    for (std::size_t c = 1; c <= k; ++c) {
      CHECK(std::abs(t[c] - frac * n[c]) <= 1.0);
      CHECK(t[c] >= 1.0);
    }
  }
}

TEST_CASE("split errors: empty class, bad fraction") {
  const std::vector<std::uint16_t> labels{1, 1, 3, 3};
  CHECK_THROWS_AS(split_indices(labels, 3, 0.5, 1), ValidationError);
  const std::vector<std::uint16_t> ok{1, 2, 1, 2};
  CHECK_THROWS_AS(split_indices(ok, 2, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(split_indices(ok, 2, 1.0, 1), ValidationError);
}

TEST_CASE("global (non-stratified) split takes ceil(frac * n) overall") {
  std::vector<std::uint16_t> labels(50, 1);
  for (std::size_t i = 0; i < 25; ++i) labels[i] = 2;
  const SplitIndices s = split_indices(labels, 2, 0.33, 3, false);
  CHECK(s.train.size() == 17);
  CHECK(s.test.size() == 33);
}

TEST_CASE("stratified_split partitions a TileSet") {
  Rng rng(8);
  const HSICube cube = testing::random_cube(10, 10, 2, rng);
  const LabelRaster labels = random_labels(10, 10, 3, rng, 1.0);
  const TileSet ts = build_dataset(cube, labels, 3);
  const TileSplit split = stratified_split(ts, 0.3, 5);
  CHECK(split.train.size() + split.test.size() == ts.size());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto* part : {&split.train, &split.test})
    for (const auto& info : part->info()) CHECK(seen.insert({info.center_row, info.center_col}).second);
}

TEST_CASE("one_hot") {
  CHECK(one_hot(3, 5) == std::vector<float>{0, 0, 1, 0, 0});
  CHECK_THROWS_AS(one_hot(0, 5), ValidationError);
  CHECK_THROWS_AS(one_hot(6, 5), ValidationError);
}

TEST_CASE("batches: sizes, exact cover, per-epoch reshuffle") {
  const auto plan = batch_plan(107, 106, 1, 1);
  REQUIRE(plan.size() == 2);
  CHECK(plan[0].size() == 106);
  CHECK(plan[1].size() == 1);

  for (std::size_t epoch = 1; epoch <= 5; ++epoch) {
    const auto p = batch_plan(250, 32, 9, epoch);
    std::vector<std::size_t> all;
    for (const auto& b : p) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
    CHECK(batch_plan(250, 32, 9, epoch) == p);
  }
  CHECK(batch_plan(250, 32, 9, 1) != batch_plan(250, 32, 9, 2));

  Rng rng(2);
  const HSICube cube = testing::random_cube(6, 6, 2, rng);
  const LabelRaster labels = random_labels(6, 6, 3, rng, 1.0);
  const TileSet ts = build_dataset(cube, labels, 3);
  const auto batches = batch_iter(ts, 10, 4, 1);
  std::size_t total = 0;
  for (const auto& b : batches) {
    total += b.labels.size();
    CHECK(b.inputs.shape().n == b.labels.size());
    CHECK(b.inputs.shape().h == 3);
    CHECK(b.targets.shape().c == ts.num_classes());
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
      CHECK(b.targets.item(i)[b.labels[i] - 1] == 1.0f);
      const auto tile = ts.tile(b.indices[i]);
      CHECK(std::equal(tile.data.begin(), tile.data.end(), b.inputs.item(i).begin()));
    }
  }
  CHECK(total == ts.size());
}
