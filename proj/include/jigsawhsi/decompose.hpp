#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "jigsawhsi/hsi_io.hpp"

namespace jigsawhsi {

enum class DecompositionMethod { PCA, FA, TSVD, NMF };

std::string_view to_string(DecompositionMethod method);
/// Accepts PCA, FA, SVD/TSVD, NMF (case-insensitive).
DecompositionMethod parse_decomposition_method(std::string_view text);

struct FitInfo {
  std::size_t iterations = 0;
  /// PCA/TSVD: retained variance fraction; FA: final log-likelihood;
  /// NMF: final Frobenius residual.
  double objective = 0.0;
  /// FA: log-likelihood after init and after each EM iteration.
  /// NMF: residual after init and after each multiplicative update.
  std::vector<double> objective_trace;
};

/// A fitted band reduction mapping B bands to c components.
struct Decomposer {
  DecompositionMethod method = DecompositionMethod::PCA;
  std::size_t bands = 0;
  std::size_t components = 0;
  Eigen::VectorXd mean;                ///< B; zero for TSVD and NMF
  Eigen::MatrixXd loadings;            ///< B x c (NMF: the nonnegative basis)
  Eigen::VectorXd noise_variance;      ///< B; FA only, zero otherwise
  Eigen::VectorXd explained_variance;  ///< c; PCA/TSVD score variances
  double shift = 0.0;                  ///< NMF: added to inputs to make them nonnegative
  double nmf_init = 0.0;               ///< NMF: constant start for transform coefficients
  FitInfo info;
};

struct FitOptions {
  std::size_t fa_max_iterations = 1000;
  double fa_tolerance = 1e-3;
  std::size_t nmf_max_iterations = 200;
  double nmf_tolerance = 1e-4;
};

/// Fits `method` on the rows of X (N x B, one pixel per row).
Decomposer fit(DecompositionMethod method, const Eigen::MatrixXd& X, std::size_t components, std::uint64_t seed,
               const FitOptions& options = {});

/// Component scores, N x c. Rows are processed in fixed-size chunks so the
/// result does not depend on the thread count.
Eigen::MatrixXd transform(const Decomposer& d, const Eigen::MatrixXd& X);

/// Maps scores back to band space (N x B).
Eigen::MatrixXd inverse_transform(const Decomposer& d, const Eigen::MatrixXd& scores);

/// Total Gaussian log-likelihood of X under a factor model.
double factor_log_likelihood(const Eigen::MatrixXd& centered, const Eigen::MatrixXd& loadings,
                             const Eigen::VectorXd& noise_variance);

/// (H*W) x B matrix view of a cube in 64-bit.
Eigen::MatrixXd cube_to_matrix(const HSICube& cube);

/// H x W x c cube from (H*W) x c scores.
HSICube matrix_to_cube(const Eigen::MatrixXd& scores, std::size_t height, std::size_t width);

struct ReducedCube {
  HSICube cube;
  Decomposer decomposer;
};

/// Fits on all pixels (or only `fit_pixels`, row-major pixel indices) and
/// transforms the whole cube.
ReducedCube reduce_cube(const HSICube& cube, DecompositionMethod method, std::size_t components,
                        std::uint64_t seed, std::optional<std::span<const std::size_t>> fit_pixels = std::nullopt,
                        const FitOptions& options = {});

/// Applies an already fitted decomposer to a cube.
HSICube apply_decomposer(const Decomposer& d, const HSICube& cube);

void save_decomposer(const Decomposer& d, const std::filesystem::path& header_path);
Decomposer load_decomposer(const std::filesystem::path& header_path);

}  // namespace jigsawhsi
