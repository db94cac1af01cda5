#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jigsawhsi/hsi_io.hpp"
#include "jigsawhsi/network.hpp"

namespace jigsawhsi {

/// K x K counts; rows are ground truth, columns predictions. Labels passed to
/// add() are 1-based class ids.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes, std::vector<std::string> class_names = {});
  /// Row-major K x K counts.
  static ConfusionMatrix from_counts(std::size_t num_classes, std::vector<std::int64_t> counts,
                                     std::vector<std::string> class_names = {});

  void add(std::uint16_t truth, std::uint16_t predicted, std::int64_t count = 1);

  std::size_t num_classes() const { return k_; }
  std::int64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  const std::vector<std::int64_t>& counts() const { return counts_; }
  const std::vector<std::string>& class_names() const { return names_; }
  void set_class_names(std::vector<std::string> names);

  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_total(std::size_t k) const;
  std::int64_t col_total(std::size_t k) const;

  /// "truth\predicted" header row plus one row per class.
  std::string to_csv() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::int64_t> counts_;
  std::vector<std::string> names_;
};

/// 100 * trace / total.
double overall_accuracy(const ConfusionMatrix& cm);
/// Mean per-class recall (percent) over classes with at least one true sample.
double average_accuracy(const ConfusionMatrix& cm);
/// Cohen's kappa in percent. When chance agreement is 1 the matrix has a
/// single occupied cell: 100 if that cell is diagonal, else an error.
double cohen_kappa(const ConfusionMatrix& cm);

/// Recall of class k (0-based) in percent, or nullopt for an empty row.
std::optional<double> class_recall(const ConfusionMatrix& cm, std::size_t k);

/// "Accuracy by target (in percentages):" followed by "%8.4f : name" lines.
std::string per_class_report(const ConfusionMatrix& cm);

/// "OA: 85.00  Kappa: 70.00  AA: 85.00"
std::string metrics_summary(const ConfusionMatrix& cm);

/// Summary block, per-class block and total sample count.
std::string metrics_report(const ConfusionMatrix& cm);

/// Argmax over classes (lowest index on ties), returned as a 1-based label.
std::uint16_t argmax_label(std::span<const float> probs);

/// Predicts every pixel (or only labeled ones when mask_background) from its
/// S x S tile. Unpredicted pixels are 0.
ClassMap classify_scene(const Model<float>& model, const HSICube& reduced, const LabelRaster& labels,
                        std::size_t window, bool mask_background, std::size_t batch_size = 256);

/// Same without ground truth: every pixel is predicted.
ClassMap classify_scene(const Model<float>& model, const HSICube& reduced, std::size_t window,
                        std::size_t batch_size = 256);

}  // namespace jigsawhsi
