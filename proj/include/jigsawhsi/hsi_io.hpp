#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace jigsawhsi {

/// H x W x B raster stored band-sequentially: value (row, col, band) lives at
/// data[(band * H + row) * W + col].
struct HSICube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<float> data;

  HSICube() = default;
  HSICube(std::size_t h, std::size_t w, std::size_t b, float fill = 0.0f)
      : height(h), width(w), bands(b), data(h * w * b, fill) {}

  std::size_t pixel_count() const { return height * width; }

  float& at(std::size_t row, std::size_t col, std::size_t band) {
    return data[(band * height + row) * width + col];
  }
  float at(std::size_t row, std::size_t col, std::size_t band) const {
    return data[(band * height + row) * width + col];
  }

  std::span<float> band(std::size_t b) { return {data.data() + b * pixel_count(), pixel_count()}; }
  std::span<const float> band(std::size_t b) const { return {data.data() + b * pixel_count(), pixel_count()}; }

  /// Throws ValidationError when the size or finiteness invariants fail.
  void validate() const;
};

/// H x W ground truth; 0 marks unlabeled pixels, classes are 1..num_classes.
struct LabelRaster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> labels;
  std::size_t num_classes = 0;

  LabelRaster() = default;
  /// Computes num_classes from the data.
  LabelRaster(std::size_t h, std::size_t w, std::vector<std::uint16_t> values);

  std::uint16_t at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
  std::size_t labeled_count() const;
  /// Number of distinct nonzero label values.
  std::size_t distinct_classes() const;
};

/// Predicted labels for a scene; 0 where a masked prediction skipped a pixel.
struct ClassMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> labels;
  std::size_t num_classes = 0;

  std::uint16_t at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
};

HSICube read_cube(const std::filesystem::path& header_path);
void write_cube(const HSICube& cube, const std::filesystem::path& header_path);

LabelRaster read_labels(const std::filesystem::path& header_path);
void write_labels(const LabelRaster& raster, const std::filesystem::path& header_path);

/// Writes the 16-bit raster (header + payload) at `header_path` and an ASCII
/// P2 graymap next to it with labels scaled to 0..255.
void write_class_map(const ClassMap& map, const std::filesystem::path& header_path);
ClassMap read_class_map(const std::filesystem::path& header_path);

/// Graymap path written alongside a class map header.
std::filesystem::path graymap_path(const std::filesystem::path& header_path);

/// P2 graymap text for a class map.
std::string render_graymap(const ClassMap& map);

struct SyntheticSceneParams {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t bands = 32;
  std::size_t num_classes = 6;
  std::size_t blob_count = 12;
  double noise_sigma = 0.05;
  std::uint64_t seed = 7;
};

struct SyntheticScene {
  HSICube cube;
  LabelRaster labels;
  /// Noise-free spectrum per class (index k-1 for class k), length B.
  std::vector<std::vector<float>> class_means;
  /// Spectrum assigned to unlabeled pixels.
  std::vector<float> background;
};

/// Voronoi blobs of seeded centers, one class per blob (cycling through the
/// classes), a one-pixel unlabeled seam between neighbouring blobs, smooth
/// unit-norm class spectra and additive Gaussian noise.
SyntheticScene generate_synthetic_scene(const SyntheticSceneParams& params);

}  // namespace jigsawhsi
