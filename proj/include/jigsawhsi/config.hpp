#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jigsawhsi/decompose.hpp"
#include "jigsawhsi/network.hpp"
#include "jigsawhsi/trainer.hpp"

namespace jigsawhsi {

/// Which pixels the band reduction is fitted on.
enum class FitScope { Full, Train };

std::string_view to_string(FitScope scope);
FitScope parse_fit_scope(std::string_view text);

/// Everything a `train` run needs. Sections and keys of the INI file:
///
///   [data]          cube, labels, output_dir, class_names
///   [decomposition] decomposition, input_channels, fit_scope
///   [tiling]        window_size, train_frac, stratified
///   [network]       hsi_filters, module_a, filter_size, branch_units, nin_before,
///                   nin_after, max_pool_size, avg_pool_size, crop, dense_units,
///                   dropout, l2
///   [training]      optimizer, learning_rate, batch_size, max_epochs, patience,
///                   val_fraction, monitor_scope, seed
struct RunConfig {
  std::filesystem::path cube;
  std::filesystem::path labels;
  std::filesystem::path output_dir = "output";
  std::vector<std::string> class_names;

  DecompositionMethod decomposition = DecompositionMethod::PCA;
  std::size_t input_channels = 0;
  FitScope fit_scope = FitScope::Full;

  std::size_t window_size = 0;
  double train_frac = 0.3;
  bool stratified = true;

  std::optional<std::size_t> hsi_filters;
  std::vector<std::size_t> module_a;
  std::size_t filter_size = 1;
  std::size_t branch_units = 64;
  std::optional<std::size_t> nin_before;
  std::optional<std::size_t> nin_after;
  std::size_t max_pool_size = 3;
  std::size_t avg_pool_size = 2;
  bool crop = true;
  std::array<std::size_t, 2> dense_units{256, 128};
  double dropout = 0.4;

  TrainConfig training;  ///< l2 lives here as l2_coeff

  /// Throws ValidationError naming the offending key.
  void validate() const;

  /// Network for a scene with `num_classes` classes.
  NetworkSpec network_spec(std::size_t num_classes) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses INI text. Relative paths are resolved against `base_dir` when it is
/// non-empty. Errors carry the 1-based line number.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});

/// Reads and parses a file; relative paths are taken from the file's directory.
RunConfig load_config(const std::filesystem::path& path);

/// Emits every key, so parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& cfg);

}  // namespace jigsawhsi
