#include "jigsawhsi/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "jigsawhsi/error.hpp"
#include "jigsawhsi/random.hpp"
#include "jigsawhsi/raster_header.hpp"

namespace jigsawhsi {

namespace {

constexpr std::string_view kModule = "decompose";
constexpr std::ptrdiff_t kTransformChunk = 1024;
constexpr double kNmfEps = 1e-12;
constexpr int kNmfTransformIterations = 200;

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Largest-magnitude entry of each column made positive.
void fix_signs(MatrixXd& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    Index arg = 0;
    m.col(j).cwiseAbs().maxCoeff(&arg);
    if (m(arg, j) < 0.0) m.col(j) *= -1.0;
  }
}

/// Top-k eigenpairs of a symmetric matrix, descending.
std::pair<VectorXd, MatrixXd> top_eigenpairs(const MatrixXd& sym, Index k) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw ValidationError(kModule, "eigendecomposition failed");
  const Index n = sym.rows();
  VectorXd values(k);
  MatrixXd vectors(n, k);
  for (Index j = 0; j < k; ++j) {
    values(j) = solver.eigenvalues()(n - 1 - j);
    vectors.col(j) = solver.eigenvectors().col(n - 1 - j);
  }
  return {values, vectors};
}

double log_likelihood_from_cov(const MatrixXd& cov, double n_samples, const MatrixXd& loadings,
                               const VectorXd& noise) {
  const Index b = cov.rows();
  MatrixXd sigma = loadings * loadings.transpose();
  sigma.diagonal() += noise;
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw ValidationError(kModule, "factor covariance is not positive definite");
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double trace = llt.solve(cov).trace();
  return -0.5 * n_samples * (static_cast<double>(b) * std::log(2.0 * std::numbers::pi) + logdet + trace);
}

Decomposer fit_pca(const MatrixXd& X, Index c) {
  Decomposer d;
  d.mean = X.colwise().mean().transpose();
  const MatrixXd centered = X.rowwise() - d.mean.transpose();
  const double denom = static_cast<double>(std::max<Index>(X.rows() - 1, 1));
  const MatrixXd cov = (centered.transpose() * centered) / denom;
  auto [values, vectors] = top_eigenpairs(cov, c);
  fix_signs(vectors);
  d.loadings = std::move(vectors);
  d.explained_variance = values.cwiseMax(0.0);
  const double total = cov.trace();
  d.info.objective = total > 0.0 ? d.explained_variance.sum() / total : 0.0;
  return d;
}

Decomposer fit_tsvd(const MatrixXd& X, Index c) {
  Decomposer d;
  d.mean = VectorXd::Zero(X.cols());
  Eigen::BDCSVD<MatrixXd> svd(X, Eigen::ComputeThinV);
  MatrixXd v = svd.matrixV().leftCols(c);
  fix_signs(v);
  d.loadings = std::move(v);
  const MatrixXd scores = X * d.loadings;
  const VectorXd score_mean = scores.colwise().mean().transpose();
  const double denom = static_cast<double>(std::max<Index>(X.rows() - 1, 1));
  d.explained_variance = ((scores.rowwise() - score_mean.transpose()).colwise().squaredNorm() / denom).transpose();
  const double total_sq = X.squaredNorm();
  d.info.objective = total_sq > 0.0 ? svd.singularValues().head(c).squaredNorm() / total_sq : 0.0;
  return d;
}

// Maximum-likelihood factor analysis by EM (diagonal noise). Initialised from
// the probabilistic-PCA solution of the covariance eigendecomposition.
Decomposer fit_fa(const MatrixXd& X, Index c, const FitOptions& options) {
  const Index b = X.cols();
  const double n = static_cast<double>(X.rows());
  Decomposer d;
  d.mean = X.colwise().mean().transpose();
  const MatrixXd centered = X.rowwise() - d.mean.transpose();
  const MatrixXd cov = (centered.transpose() * centered) / n;
  const VectorXd var = cov.diagonal();
  if (!(var.maxCoeff() > 0.0)) {
    throw ValidationError(kModule, "factor analysis needs at least one band with nonzero variance");
  }
  const VectorXd floor = (var * 1e-6).cwiseMax(1e-12 * var.maxCoeff());

  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
  const VectorXd all_values = solver.eigenvalues().reverse();
  const MatrixXd all_vectors = solver.eigenvectors().rowwise().reverse();
  const double residual = c < b ? all_values.tail(b - c).mean() : 1e-3 * var.mean();
  MatrixXd loadings(b, c);
  for (Index j = 0; j < c; ++j) {
    const double lambda = std::max(all_values(j), 0.0);
    loadings.col(j) = all_vectors.col(j) * std::sqrt(std::max(lambda - residual, 1e-3 * lambda + 1e-12));
  }
  VectorXd noise = (var - loadings.rowwise().squaredNorm()).cwiseMax(floor);

  const MatrixXd identity = MatrixXd::Identity(c, c);
  double ll = log_likelihood_from_cov(cov, n, loadings, noise);
  d.info.objective_trace.push_back(ll);
  std::size_t it = 0;
  while (it < options.fa_max_iterations) {
    ++it;
    const VectorXd inv_noise = noise.cwiseInverse();
    const MatrixXd lt_pinv = loadings.transpose() * inv_noise.asDiagonal();
    const MatrixXd m = identity + lt_pinv * loadings;
    const MatrixXd m_inv = m.ldlt().solve(identity);
    const MatrixXd beta = m_inv * lt_pinv;
    const MatrixXd s_beta_t = cov * beta.transpose();
    const MatrixXd ezz = m_inv + beta * s_beta_t;
    loadings = ezz.ldlt().solve(s_beta_t.transpose()).transpose();
    noise = (var - loadings.cwiseProduct(s_beta_t).rowwise().sum()).cwiseMax(floor);
    const double next = log_likelihood_from_cov(cov, n, loadings, noise);
    d.info.objective_trace.push_back(next);
    const double gain = next - ll;
    ll = next;
    if (gain < options.fa_tolerance) break;
  }
  d.loadings = std::move(loadings);
  d.noise_variance = std::move(noise);
  d.info.iterations = it;
  d.info.objective = ll;
  return d;
}

double frobenius_residual(const MatrixXd& X, const MatrixXd& w, const MatrixXd& h) {
  return (X - w * h.transpose()).norm();
}

// Lee-Seung multiplicative updates for min ||X - W H^T||_F, W >= 0, H >= 0.
Decomposer fit_nmf(const MatrixXd& X, Index c, std::uint64_t seed, const FitOptions& options) {
  Decomposer d;
  const double min_value = X.minCoeff();
  d.shift = min_value < 0.0 ? -min_value : 0.0;
  const MatrixXd xs = X.array() + d.shift;
  const double scale = std::sqrt(xs.mean() / static_cast<double>(c));
  d.nmf_init = scale;

  Rng rng(seed);
  MatrixXd w(X.rows(), c);
  MatrixXd h(X.cols(), c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < w.rows(); ++i) w(i, j) = scale * rng.uniform();
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < h.rows(); ++i) h(i, j) = scale * rng.uniform();

  double objective = frobenius_residual(xs, w, h);
  d.info.objective_trace.push_back(objective);
  std::size_t it = 0;
  while (it < options.nmf_max_iterations) {
    ++it;
    const MatrixXd h_num = xs.transpose() * w;
    const MatrixXd h_den = h * (w.transpose() * w);
    h = h.array() * h_num.array() / (h_den.array() + kNmfEps);
    const MatrixXd w_num = xs * h;
    const MatrixXd w_den = w * (h.transpose() * h);
    w = w.array() * w_num.array() / (w_den.array() + kNmfEps);
    const double next = frobenius_residual(xs, w, h);
    d.info.objective_trace.push_back(next);
    const double rel = objective > 0.0 ? (objective - next) / objective : 0.0;
    objective = next;
    if (rel < options.nmf_tolerance) break;
  }
  d.mean = VectorXd::Zero(X.cols());
  d.loadings = std::move(h);
  d.info.iterations = it;
  d.info.objective = objective;
  return d;
}

MatrixXd transform_chunk(const Decomposer& d, const MatrixXd& x) {
  switch (d.method) {
    case DecompositionMethod::PCA:
      return (x.rowwise() - d.mean.transpose()) * d.loadings;
    case DecompositionMethod::TSVD:
      return x * d.loadings;
    case DecompositionMethod::FA: {
      const Index c = static_cast<Index>(d.components);
      const VectorXd inv_noise = d.noise_variance.cwiseInverse();
      const MatrixXd pinv_l = inv_noise.asDiagonal() * d.loadings;
      const MatrixXd m = MatrixXd::Identity(c, c) + d.loadings.transpose() * pinv_l;
      const MatrixXd proj = m.ldlt().solve(pinv_l.transpose()).transpose();  // B x c
      return (x.rowwise() - d.mean.transpose()) * proj;
    }
    case DecompositionMethod::NMF: {
      const MatrixXd xs = (x.array() + d.shift).cwiseMax(0.0).matrix();
      const MatrixXd hth = d.loadings.transpose() * d.loadings;
      const MatrixXd xh = xs * d.loadings;
      MatrixXd coef = MatrixXd::Constant(x.rows(), static_cast<Index>(d.components), d.nmf_init);
      for (int it = 0; it < kNmfTransformIterations; ++it) {
        coef = coef.array() * xh.array() / ((coef * hth).array() + kNmfEps);
      }
      return coef;
    }
  }
  throw ValidationError(kModule, "unknown decomposition method");
}

}  // namespace

std::string_view to_string(DecompositionMethod method) {
  switch (method) {
    case DecompositionMethod::PCA: return "PCA";
    case DecompositionMethod::FA: return "FA";
    case DecompositionMethod::TSVD: return "SVD";
    case DecompositionMethod::NMF: return "NMF";
  }
  return "?";
}

DecompositionMethod parse_decomposition_method(std::string_view text) {
  const std::string t = lowercase(trim(text));
  if (t == "pca") return DecompositionMethod::PCA;
  if (t == "fa") return DecompositionMethod::FA;
  if (t == "svd" || t == "tsvd") return DecompositionMethod::TSVD;
  if (t == "nmf") return DecompositionMethod::NMF;
  throw ValidationError(kModule, fmt::format("unknown decomposition '{}' (expected PCA, FA, SVD or NMF)", text));
}

Decomposer fit(DecompositionMethod method, const MatrixXd& X, std::size_t components, std::uint64_t seed,
               const FitOptions& options) {
  const auto c = static_cast<Index>(components);
  if (components == 0) throw ValidationError(kModule, "components must be positive");
  if (c > X.cols()) {
    throw ValidationError(kModule, fmt::format("components ({}) exceeds band count ({})", components, X.cols()));
  }
  if (c > X.rows()) {
    throw ValidationError(kModule, fmt::format("components ({}) exceeds sample count ({})", components, X.rows()));
  }
  if (!X.allFinite()) throw ValidationError(kModule, "input matrix has non-finite values");

  Decomposer d;
  switch (method) {
    case DecompositionMethod::PCA: d = fit_pca(X, c); break;
    case DecompositionMethod::TSVD: d = fit_tsvd(X, c); break;
    case DecompositionMethod::FA: d = fit_fa(X, c, options); break;
    case DecompositionMethod::NMF: d = fit_nmf(X, c, seed, options); break;
  }
  d.method = method;
  d.bands = static_cast<std::size_t>(X.cols());
  d.components = components;
  if (d.noise_variance.size() == 0) d.noise_variance = VectorXd::Zero(X.cols());
  if (d.explained_variance.size() == 0) d.explained_variance = VectorXd::Zero(c);
  return d;
}

MatrixXd transform(const Decomposer& d, const MatrixXd& X) {
  if (static_cast<std::size_t>(X.cols()) != d.bands) {
    throw ValidationError(kModule, fmt::format("band count mismatch: decomposer fitted on {} bands, input has {}",
                                               d.bands, X.cols()));
  }
  MatrixXd out(X.rows(), static_cast<Index>(d.components));
  const Index chunks = (X.rows() + kTransformChunk - 1) / kTransformChunk;
#pragma omp parallel for schedule(static)
  for (Index chunk = 0; chunk < chunks; ++chunk) {
    const Index begin = chunk * kTransformChunk;
    const Index rows = std::min(kTransformChunk, X.rows() - begin);
    out.middleRows(begin, rows) = transform_chunk(d, X.middleRows(begin, rows));
  }
  return out;
}

MatrixXd inverse_transform(const Decomposer& d, const MatrixXd& scores) {
  if (static_cast<std::size_t>(scores.cols()) != d.components) {
    throw ValidationError(kModule, "score column count does not match the decomposer");
  }
  MatrixXd x = scores * d.loadings.transpose();
  if (d.method == DecompositionMethod::NMF) return x.array() - d.shift;
  return x.rowwise() + d.mean.transpose();
}

double factor_log_likelihood(const MatrixXd& centered, const MatrixXd& loadings, const VectorXd& noise_variance) {
  const double n = static_cast<double>(centered.rows());
  const MatrixXd cov = (centered.transpose() * centered) / n;
  return log_likelihood_from_cov(cov, n, loadings, noise_variance);
}

MatrixXd cube_to_matrix(const HSICube& cube) {
  // BSQ storage is exactly a column-major (pixels x bands) matrix.
  const Eigen::Map<const Eigen::MatrixXf> view(cube.data.data(), static_cast<Index>(cube.pixel_count()),
                                               static_cast<Index>(cube.bands));
  return view.cast<double>();
}

HSICube matrix_to_cube(const MatrixXd& scores, std::size_t height, std::size_t width) {
  if (static_cast<std::size_t>(scores.rows()) != height * width) {
    throw ValidationError(kModule, "score rows do not match the raster size");
  }
  HSICube cube(height, width, static_cast<std::size_t>(scores.cols()));
  Eigen::Map<Eigen::MatrixXf> view(cube.data.data(), scores.rows(), scores.cols());
  view = scores.cast<float>();
  return cube;
}

ReducedCube reduce_cube(const HSICube& cube, DecompositionMethod method, std::size_t components,
                        std::uint64_t seed, std::optional<std::span<const std::size_t>> fit_pixels,
                        const FitOptions& options) {
  const MatrixXd X = cube_to_matrix(cube);
  ReducedCube out;
  if (fit_pixels) {
    MatrixXd subset(static_cast<Index>(fit_pixels->size()), X.cols());
    for (std::size_t i = 0; i < fit_pixels->size(); ++i) {
      const std::size_t p = (*fit_pixels)[i];
      if (p >= cube.pixel_count()) throw ValidationError(kModule, "fit pixel index outside the cube");
      subset.row(static_cast<Index>(i)) = X.row(static_cast<Index>(p));
    }
    out.decomposer = fit(method, subset, components, seed, options);
  } else {
    out.decomposer = fit(method, X, components, seed, options);
  }
  out.cube = matrix_to_cube(transform(out.decomposer, X), cube.height, cube.width);
  return out;
}

HSICube apply_decomposer(const Decomposer& d, const HSICube& cube) {
  return matrix_to_cube(transform(d, cube_to_matrix(cube)), cube.height, cube.width);
}

void save_decomposer(const Decomposer& d, const std::filesystem::path& header_path) {
  RasterHeader header;
  header.set("kind", "decomposer");
  header.set("method", std::string(to_string(d.method)));
  header.set("bands", static_cast<std::uint64_t>(d.bands));
  header.set("components", static_cast<std::uint64_t>(d.components));
  header.set("dtype", "float64");
  header.set("byteorder", "le");
  header.set("layout", "mean[bands],loadings[bands*components col-major],noise_variance[bands],"
                       "explained_variance[components]");
  header.set_double("shift", d.shift);
  header.set_double("nmf_init", d.nmf_init);
  header.set("iterations", static_cast<std::uint64_t>(d.info.iterations));
  header.set_double("objective", d.info.objective);
  header.set("data_file", default_payload_path(header_path).filename().string());

  std::vector<double> payload;
  payload.reserve(2 * d.bands + d.bands * d.components + d.components);
  payload.insert(payload.end(), d.mean.data(), d.mean.data() + d.mean.size());
  payload.insert(payload.end(), d.loadings.data(), d.loadings.data() + d.loadings.size());
  payload.insert(payload.end(), d.noise_variance.data(), d.noise_variance.data() + d.noise_variance.size());
  payload.insert(payload.end(), d.explained_variance.data(),
                 d.explained_variance.data() + d.explained_variance.size());
  if (payload.size() != 2 * d.bands + d.bands * d.components + d.components) {
    throw ValidationError(kModule, "decomposer arrays do not match its declared shape");
  }
  if (!header_path.parent_path().empty()) std::filesystem::create_directories(header_path.parent_path());
  write_header(header, header_path, kModule);
  write_payload<double>(default_payload_path(header_path), payload, kModule);
}

Decomposer load_decomposer(const std::filesystem::path& header_path) {
  const RasterHeader header = read_header(header_path, kModule);
  header.expect("kind", "decomposer", kModule);
  header.expect("dtype", "float64", kModule);
  header.expect("byteorder", "le", kModule);
  Decomposer d;
  d.method = parse_decomposition_method(header.get("method", kModule));
  d.bands = header.get_uint("bands", kModule);
  d.components = header.get_uint("components", kModule);
  if (d.bands == 0 || d.components == 0 || d.components > d.bands) {
    throw ValidationError(kModule, "decomposer header has invalid bands/components");
  }
  d.shift = header.get_double("shift", kModule);
  d.nmf_init = header.get_double("nmf_init", kModule);
  d.info.iterations = header.get_uint("iterations", kModule);
  d.info.objective = header.get_double("objective", kModule);
  const auto b = static_cast<Index>(d.bands);
  const auto c = static_cast<Index>(d.components);
  const std::vector<double> payload =
      read_payload<double>(payload_path(header, header_path), static_cast<std::size_t>(2 * b + b * c + c), kModule);
  const double* p = payload.data();
  d.mean = Eigen::Map<const VectorXd>(p, b);
  p += b;
  d.loadings = Eigen::Map<const MatrixXd>(p, b, c);
  p += b * c;
  d.noise_variance = Eigen::Map<const VectorXd>(p, b);
  p += b;
  d.explained_variance = Eigen::Map<const VectorXd>(p, c);
  return d;
}

}  // namespace jigsawhsi
