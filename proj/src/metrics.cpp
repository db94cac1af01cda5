#include "jigsawhsi/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "jigsawhsi/error.hpp"
#include "jigsawhsi/tiler.hpp"

namespace jigsawhsi {

namespace {

constexpr std::string_view kModule = "metrics";

std::vector<std::string> default_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 1; i <= k; ++i) names.push_back(fmt::format("Class {}", i));
  return names;
}

void require_total(const ConfusionMatrix& cm) {
  if (cm.total() <= 0) throw ValidationError(kModule, "confusion matrix is empty");
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes, std::vector<std::string> class_names)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ValidationError(kModule, "confusion matrix needs at least one class");
  set_class_names(std::move(class_names));
}

ConfusionMatrix ConfusionMatrix::from_counts(std::size_t num_classes, std::vector<std::int64_t> counts,
                                             std::vector<std::string> class_names) {
  ConfusionMatrix cm(num_classes, std::move(class_names));
  if (counts.size() != num_classes * num_classes) {
    throw ValidationError(kModule, fmt::format("expected {} counts, got {}", num_classes * num_classes,
                                               counts.size()));
  }
  if (std::any_of(counts.begin(), counts.end(), [](auto v) { return v < 0; })) {
    throw ValidationError(kModule, "confusion counts must be non-negative");
  }
  cm.counts_ = std::move(counts);
  return cm;
}

void ConfusionMatrix::set_class_names(std::vector<std::string> names) {
  if (names.empty()) names = default_names(k_);
  if (names.size() != k_) {
    throw ValidationError(kModule, fmt::format("{} class names for {} classes", names.size(), k_));
  }
  names_ = std::move(names);
}

void ConfusionMatrix::add(std::uint16_t truth, std::uint16_t predicted, std::int64_t count) {
  if (truth == 0 || truth > k_ || predicted == 0 || predicted > k_) {
    throw ValidationError(kModule, fmt::format("labels ({}, {}) outside [1, {}]", truth, predicted, k_));
  }
  counts_[(truth - 1) * k_ + (predicted - 1)] += count;
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (std::size_t k = 0; k < k_; ++k) t += at(k, k);
  return t;
}

std::int64_t ConfusionMatrix::row_total(std::size_t k) const {
  std::int64_t t = 0;
  for (std::size_t j = 0; j < k_; ++j) t += at(k, j);
  return t;
}

std::int64_t ConfusionMatrix::col_total(std::size_t k) const {
  std::int64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += at(i, k);
  return t;
}

std::string ConfusionMatrix::to_csv() const {
  std::string out = "truth\\predicted";
  for (const auto& name : names_) out += "," + name;
  out += '\n';
  for (std::size_t i = 0; i < k_; ++i) {
    out += names_[i];
    for (std::size_t j = 0; j < k_; ++j) out += fmt::format(",{}", at(i, j));
    out += '\n';
  }
  return out;
}

double overall_accuracy(const ConfusionMatrix& cm) {
  require_total(cm);
  return 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

std::optional<double> class_recall(const ConfusionMatrix& cm, std::size_t k) {
  const std::int64_t row = cm.row_total(k);
  if (row == 0) return std::nullopt;
  return 100.0 * static_cast<double>(cm.at(k, k)) / static_cast<double>(row);
}

double average_accuracy(const ConfusionMatrix& cm) {
  require_total(cm);
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    if (auto r = class_recall(cm, k)) {
      sum += *r;
      ++used;
    }
  }
  return sum / static_cast<double>(used);
}

double cohen_kappa(const ConfusionMatrix& cm) {
  require_total(cm);
  const double total = static_cast<double>(cm.total());
  const double p_o = static_cast<double>(cm.trace()) / total;
  double p_e = 0.0;
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    p_e += static_cast<double>(cm.row_total(k)) * static_cast<double>(cm.col_total(k));
  }
  p_e /= total * total;
  if (p_e >= 1.0) {
    if (p_o == 1.0) return 100.0;
    throw ValidationError(kModule, "kappa is undefined: chance agreement is 1 but observed agreement is not");
  }
  return 100.0 * (p_o - p_e) / (1.0 - p_e);
}

std::string per_class_report(const ConfusionMatrix& cm) {
  std::string out = "Accuracy by target (in percentages):\n";
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    const auto r = class_recall(cm, k);
    out += r ? fmt::format("{:8.4f} : {}\n", *r, cm.class_names()[k])
             : fmt::format("{:>8} : {}\n", "n/a", cm.class_names()[k]);
  }
  return out;
}

std::string metrics_summary(const ConfusionMatrix& cm) {
  return fmt::format("OA: {:.2f}  Kappa: {:.2f}  AA: {:.2f}", overall_accuracy(cm), cohen_kappa(cm),
                     average_accuracy(cm));
}

std::string metrics_report(const ConfusionMatrix& cm) {
  std::string out = "Classification metrics (in percentages):\n";
  out += fmt::format("OA    : {:.2f}\n", overall_accuracy(cm));
  out += fmt::format("Kappa : {:.2f}\n", cohen_kappa(cm));
  out += fmt::format("AA    : {:.2f}\n", average_accuracy(cm));
  out += fmt::format("Samples: {}\n\n", cm.total());
  out += per_class_report(cm);
  return out;
}

std::uint16_t argmax_label(std::span<const float> probs) {
  if (probs.empty()) throw ValidationError(kModule, "argmax over no classes");
  std::size_t best = 0;
  for (std::size_t j = 1; j < probs.size(); ++j) {
    if (probs[j] > probs[best]) best = j;
  }
  return static_cast<std::uint16_t>(best + 1);
}

namespace {

ClassMap classify_pixels(const Model<float>& model, const HSICube& reduced, std::span<const std::size_t> pixels,
                         std::size_t window, std::size_t batch_size) {
  const NetworkSpec& spec = model.spec();
  if (window != spec.window || reduced.bands != spec.channels) {
    throw ValidationError(kModule, fmt::format("model expects {}x{}x{} tiles, scene gives {}x{}x{}", spec.window,
                                               spec.window, spec.channels, window, window, reduced.bands));
  }
  if (batch_size == 0) throw ValidationError(kModule, "batch size must be positive");
  ClassMap map{reduced.height, reduced.width, std::vector<std::uint16_t>(reduced.pixel_count(), 0),
               spec.num_classes};
  const std::size_t tile_size = window * window * reduced.bands;
  for (std::size_t start = 0; start < pixels.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, pixels.size() - start);
    nn::Tensor4<float> batch({n, window, window, reduced.bands});
    const long count = static_cast<long>(n);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < count; ++i) {
      const std::size_t p = pixels[start + static_cast<std::size_t>(i)];
      extract_tile(reduced, p / reduced.width, p % reduced.width, window,
                   std::span<float>(batch.data() + i * static_cast<long>(tile_size), tile_size));
    }
    const nn::Tensor4<float> probs = model.predict(batch);
    for (std::size_t i = 0; i < n; ++i) map.labels[pixels[start + i]] = argmax_label(probs.item(i));
  }
  return map;
}

}  // namespace

ClassMap classify_scene(const Model<float>& model, const HSICube& reduced, const LabelRaster& labels,
                        std::size_t window, bool mask_background, std::size_t batch_size) {
  if (labels.height != reduced.height || labels.width != reduced.width) {
    throw ValidationError(kModule, "labels and cube dimensions differ");
  }
  std::vector<std::size_t> pixels;
  for (std::size_t p = 0; p < reduced.pixel_count(); ++p) {
    if (!mask_background || labels.labels[p] != 0) pixels.push_back(p);
  }
  return classify_pixels(model, reduced, pixels, window, batch_size);
}

ClassMap classify_scene(const Model<float>& model, const HSICube& reduced, std::size_t window,
                        std::size_t batch_size) {
  std::vector<std::size_t> pixels(reduced.pixel_count());
  std::iota(pixels.begin(), pixels.end(), std::size_t{0});
  return classify_pixels(model, reduced, pixels, window, batch_size);
}

}  // namespace jigsawhsi
