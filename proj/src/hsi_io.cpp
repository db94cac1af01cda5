#include "jigsawhsi/hsi_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <string_view>

#include <fmt/format.h>

#include "jigsawhsi/error.hpp"
#include "jigsawhsi/random.hpp"
#include "jigsawhsi/raster_header.hpp"

namespace jigsawhsi {

namespace {

constexpr std::string_view kModule = "hsi-io";

RasterHeader base_header(std::size_t h, std::size_t w, std::size_t b, std::string_view dtype,
                         const std::filesystem::path& header_path) {
  RasterHeader header;
  header.set("height", static_cast<std::uint64_t>(h));
  header.set("width", static_cast<std::uint64_t>(w));
  header.set("bands", static_cast<std::uint64_t>(b));
  header.set("dtype", std::string(dtype));
  header.set("interleave", "bsq");
  header.set("byteorder", "le");
  header.set("data_file", default_payload_path(header_path).filename().string());
  return header;
}

struct RasterDims {
  std::size_t height, width, bands;
};

RasterDims check_layout(const RasterHeader& header, std::string_view dtype) {
  header.expect("dtype", dtype, kModule);
  header.expect("interleave", "bsq", kModule);
  header.expect("byteorder", "le", kModule);
  RasterDims dims{header.get_uint("height", kModule), header.get_uint("width", kModule),
                  header.get_uint("bands", kModule)};
  if (dims.height == 0 || dims.width == 0 || dims.bands == 0) {
    throw ValidationError(kModule, "height, width and bands must be positive");
  }
  return dims;
}

void ensure_parent(const std::filesystem::path& path) {
  const auto parent = path.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  if (ec) throw IoError(kModule, fmt::format("cannot create directory '{}'", parent.string()));
}

std::size_t max_label(std::span<const std::uint16_t> values) {
  std::uint16_t m = 0;
  for (auto v : values) m = std::max(m, v);
  return m;
}

}  // namespace

void HSICube::validate() const {
  if (data.size() != height * width * bands) {
    throw ValidationError(kModule, fmt::format("cube data has {} values, expected {}x{}x{}={}", data.size(),
                                               height, width, bands, height * width * bands));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError(kModule, fmt::format("non-finite value at payload index {}", i));
    }
  }
}

LabelRaster::LabelRaster(std::size_t h, std::size_t w, std::vector<std::uint16_t> values)
    : height(h), width(w), labels(std::move(values)) {
  if (labels.size() != h * w) {
    throw ValidationError(kModule, fmt::format("label raster has {} values, expected {}", labels.size(), h * w));
  }
  num_classes = max_label(labels);
}

std::size_t LabelRaster::labeled_count() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
}

std::size_t LabelRaster::distinct_classes() const {
  std::set<std::uint16_t> seen;
  for (auto v : labels) {
    if (v != 0) seen.insert(v);
  }
  return seen.size();
}

HSICube read_cube(const std::filesystem::path& header_path) {
  const RasterHeader header = read_header(header_path, kModule);
  const RasterDims dims = check_layout(header, "float32");
  HSICube cube;
  cube.height = dims.height;
  cube.width = dims.width;
  cube.bands = dims.bands;
  cube.data = read_payload<float>(payload_path(header, header_path), dims.height * dims.width * dims.bands,
                                  kModule);
  cube.validate();
  return cube;
}

void write_cube(const HSICube& cube, const std::filesystem::path& header_path) {
  if (cube.data.size() != cube.height * cube.width * cube.bands || cube.data.empty()) {
    throw ValidationError(kModule, "refusing to write a cube whose data does not match its dimensions");
  }
  ensure_parent(header_path);
  write_header(base_header(cube.height, cube.width, cube.bands, "float32", header_path), header_path, kModule);
  write_payload<float>(default_payload_path(header_path), cube.data, kModule);
}

LabelRaster read_labels(const std::filesystem::path& header_path) {
  const RasterHeader header = read_header(header_path, kModule);
  const RasterDims dims = check_layout(header, "uint16");
  if (dims.bands != 1) throw ValidationError(kModule, "label rasters must have bands=1");
  auto values = read_payload<std::uint16_t>(payload_path(header, header_path), dims.height * dims.width, kModule);
  return LabelRaster(dims.height, dims.width, std::move(values));
}

void write_labels(const LabelRaster& raster, const std::filesystem::path& header_path) {
  if (raster.labels.size() != raster.height * raster.width || raster.labels.empty()) {
    throw ValidationError(kModule, "refusing to write a label raster whose data does not match its dimensions");
  }
  ensure_parent(header_path);
  write_header(base_header(raster.height, raster.width, 1, "uint16", header_path), header_path, kModule);
  write_payload<std::uint16_t>(default_payload_path(header_path), raster.labels, kModule);
}

std::filesystem::path graymap_path(const std::filesystem::path& header_path) {
  std::filesystem::path p = header_path;
  p.replace_extension(".pgm");
  return p;
}

std::string render_graymap(const ClassMap& map) {
  if (map.height == 0 || map.width == 0 || map.labels.size() != map.height * map.width) {
    throw ValidationError(kModule, "cannot render an empty or malformed class map");
  }
  std::string out = fmt::format("P2\n# jigsawhsi class map, classes={}\n{} {}\n255\n", map.num_classes,
                                map.width, map.height);
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      const std::size_t label = map.at(r, c);
      if (label > map.num_classes) {
        throw ValidationError(kModule, fmt::format("label {} exceeds num_classes {}", label, map.num_classes));
      }
      const long gray =
          map.num_classes == 0 ? 0 : std::lround(255.0 * static_cast<double>(label) / map.num_classes);
      if (c != 0) out += ' ';
      out += std::to_string(gray);
    }
    out += '\n';
  }
  return out;
}

void write_class_map(const ClassMap& map, const std::filesystem::path& header_path) {
  const std::string gray = render_graymap(map);  // validates shape first
  LabelRaster raster;
  raster.height = map.height;
  raster.width = map.width;
  raster.labels = map.labels;
  raster.num_classes = map.num_classes;
  write_labels(raster, header_path);
  std::ofstream out(graymap_path(header_path), std::ios::trunc);
  if (!out) throw IoError(kModule, fmt::format("cannot write graymap '{}'", graymap_path(header_path).string()));
  out << gray;
}

ClassMap read_class_map(const std::filesystem::path& header_path) {
  LabelRaster raster = read_labels(header_path);
  return ClassMap{raster.height, raster.width, std::move(raster.labels), raster.num_classes};
}

SyntheticScene generate_synthetic_scene(const SyntheticSceneParams& p) {
  if (p.height == 0 || p.width == 0) throw ValidationError(kModule, "synthetic scene needs positive H and W");
  if (p.num_classes < 2) throw ValidationError(kModule, "synthetic scene needs at least 2 classes");
  if (p.bands < p.num_classes) throw ValidationError(kModule, "synthetic scene needs bands >= classes");
  if (p.num_classes > std::numeric_limits<std::uint16_t>::max()) {
    throw ValidationError(kModule, "too many classes for a 16-bit label raster");
  }
  if (!(p.noise_sigma >= 0.0)) throw ValidationError(kModule, "noise_sigma must be non-negative");
  if (p.blob_count < p.num_classes) {
    throw ValidationError(kModule, fmt::format("infeasible blob packing: {} blobs cannot host {} classes",
                                               p.blob_count, p.num_classes));
  }
  const std::size_t n_pixels = p.height * p.width;
  const std::size_t min_pixels = (n_pixels + 99) / 100;
  if (min_pixels * p.num_classes > n_pixels) {
    throw ValidationError(kModule, "infeasible blob packing: 1% per class exceeds the scene");
  }

  Rng rng(p.seed);
  SyntheticScene scene;

  // Class spectra: unit impulses spread across the bands, smoothed by a
  // Gaussian of one band, normalized to unit length, over a flat baseline.
  constexpr double kBaseline = 0.2;
  constexpr double kSmoothing = 1.0;
  scene.class_means.resize(p.num_classes);
  for (std::size_t k = 0; k < p.num_classes; ++k) {
    const double centre = (static_cast<double>(k) + 0.5) * static_cast<double>(p.bands) / p.num_classes;
    std::vector<double> spectrum(p.bands);
    double norm = 0.0;
    for (std::size_t b = 0; b < p.bands; ++b) {
      const double d = (static_cast<double>(b) - centre) / kSmoothing;
      spectrum[b] = std::exp(-0.5 * d * d);
      norm += spectrum[b] * spectrum[b];
    }
    norm = std::sqrt(norm);
    scene.class_means[k].resize(p.bands);
    for (std::size_t b = 0; b < p.bands; ++b) {
      scene.class_means[k][b] = static_cast<float>(kBaseline + spectrum[b] / norm);
    }
  }
  scene.background.assign(p.bands, static_cast<float>(kBaseline));

  // Blob layout, retried until every class covers at least 1% of the scene.
  constexpr int kAttempts = 64;
  constexpr double kSeam = 1.0;
  std::vector<std::uint16_t> labels(n_pixels, 0);
  bool placed = false;
  for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
    std::vector<std::pair<double, double>> centres(p.blob_count);
    for (auto& c : centres) {
      c = {rng.uniform(0.0, static_cast<double>(p.height)), rng.uniform(0.0, static_cast<double>(p.width))};
    }
    std::vector<std::size_t> counts(p.num_classes, 0);
    for (std::size_t r = 0; r < p.height; ++r) {
      for (std::size_t c = 0; c < p.width; ++c) {
        double best = std::numeric_limits<double>::infinity();
        double second = best;
        std::size_t owner = 0;
        for (std::size_t i = 0; i < centres.size(); ++i) {
          const double dr = static_cast<double>(r) + 0.5 - centres[i].first;
          const double dc = static_cast<double>(c) + 0.5 - centres[i].second;
          const double d = std::sqrt(dr * dr + dc * dc);
          if (d < best) {
            second = best;
            best = d;
            owner = i;
          } else if (d < second) {
            second = d;
          }
        }
        labels[r * p.width + c] =
            second - best >= kSeam ? static_cast<std::uint16_t>(owner % p.num_classes + 1) : std::uint16_t{0};
      }
    }
    // Seams can leave one-pixel slivers at cell corners; drop them. Removing
    // an isolated pixel cannot isolate another, so one pass suffices.
    std::vector<std::uint16_t> kept = labels;
    for (std::size_t r = 0; r < p.height; ++r) {
      for (std::size_t c = 0; c < p.width; ++c) {
        const auto v = labels[r * p.width + c];
        if (v == 0) continue;
        const bool joined = (r > 0 && labels[(r - 1) * p.width + c] == v) ||
                            (r + 1 < p.height && labels[(r + 1) * p.width + c] == v) ||
                            (c > 0 && labels[r * p.width + c - 1] == v) ||
                            (c + 1 < p.width && labels[r * p.width + c + 1] == v);
        if (joined) {
          ++counts[v - 1];
        } else {
          kept[r * p.width + c] = 0;
        }
      }
    }
    labels = std::move(kept);
    placed = std::all_of(counts.begin(), counts.end(), [&](std::size_t n) { return n >= min_pixels; });
  }
  if (!placed) {
    throw ValidationError(kModule, fmt::format("infeasible blob packing: could not give every one of {} classes "
                                               "1% of a {}x{} scene with {} blobs",
                                               p.num_classes, p.height, p.width, p.blob_count));
  }

  scene.cube = HSICube(p.height, p.width, p.bands);
  for (std::size_t b = 0; b < p.bands; ++b) {
    for (std::size_t i = 0; i < n_pixels; ++i) {
      const std::uint16_t label = labels[i];
      const float mean = label == 0 ? scene.background[b] : scene.class_means[label - 1][b];
      const double noise = p.noise_sigma > 0.0 ? p.noise_sigma * rng.normal() : 0.0;
      scene.cube.data[b * n_pixels + i] = static_cast<float>(mean + noise);
    }
  }
  scene.labels = LabelRaster(p.height, p.width, std::move(labels));
  return scene;
}

}  // namespace jigsawhsi
