#include <doctest.h>

#include <cmath>
#include <numbers>

#include <omp.h>

#include "jigsawhsi/decompose.hpp"
#include "jigsawhsi/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace jigsawhsi;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

// Low-rank signal plus small noise, shifted away from zero.
MatrixXd structured_matrix(Eigen::Index rows, Eigen::Index cols, Eigen::Index rank, std::uint64_t seed) {
  const MatrixXd a = random_matrix(rows, rank, seed);
  const MatrixXd b = random_matrix(rank, cols, seed + 1000);
  return a * b + 0.1 * random_matrix(rows, cols, seed + 2000) + MatrixXd::Constant(rows, cols, 3.0);
}

double reconstruction_error(const Decomposer& d, const MatrixXd& X) {
  return (inverse_transform(d, transform(d, X)) - X).norm();
}

// Gaussian log-likelihood of the centred rows under covariance L L^T + diag(psi),
// computed directly from the density.
double direct_log_likelihood(const MatrixXd& centered, const MatrixXd& L, const VectorXd& psi) {
  const MatrixXd sigma = L * L.transpose() + MatrixXd(psi.asDiagonal());
  Eigen::LLT<MatrixXd> llt(sigma);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double total = 0.0;
  for (Eigen::Index i = 0; i < centered.rows(); ++i) {
    const VectorXd x = centered.row(i).transpose();
    total += -0.5 * (x.dot(llt.solve(x)) + logdet + static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
  }
  return total;
}

}  // namespace

TEST_CASE("PCA on identical rows: zero variance, zero scores, any c") {
  MatrixXd X(30, 5);
  for (Eigen::Index i = 0; i < 30; ++i) X.row(i) << 1, 2, 3, 4, 5;
  for (std::size_t c = 1; c <= 5; ++c) {
    const Decomposer d = fit(DecompositionMethod::PCA, X, c, 1);
    CHECK(d.explained_variance.cwiseAbs().maxCoeff() == 0.0);
    CHECK(transform(d, X).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("FA rejects data with zero variance in every band") {
  MatrixXd X = MatrixXd::Constant(20, 4, 2.5);
  CHECK_THROWS_AS(fit(DecompositionMethod::FA, X, 2, 1), ValidationError);
}

TEST_CASE("components larger than the band count are rejected") {
  const MatrixXd X = random_matrix(20, 4, 1);
  for (auto m : {DecompositionMethod::PCA, DecompositionMethod::FA, DecompositionMethod::TSVD,
                 DecompositionMethod::NMF}) {
    CHECK_THROWS_AS(fit(m, X, 5, 1), ValidationError);
    CHECK_THROWS_AS(fit(m, X, 0, 1), ValidationError);
  }
}

TEST_CASE("rank-1 data is recovered exactly by PCA and TSVD at c=1") {
  Rng rng(5);
  VectorXd u(50), v(8);
  for (auto& x : u) x = rng.uniform(0.5, 2.0);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  const MatrixXd X = u * v.transpose();
  for (auto m : {DecompositionMethod::PCA, DecompositionMethod::TSVD}) {
    const Decomposer d = fit(m, X, 1, 1);
    CHECK(reconstruction_error(d, X) < 1e-8 * X.norm());
  }
}

TEST_CASE("PCA matches a Jacobi eigensolver oracle on random 200x16 data") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const MatrixXd X = structured_matrix(200, 16, 6, seed);
    const Decomposer d = fit(DecompositionMethod::PCA, X, 4, seed);

    // Oracle: covariance by explicit loops, Jacobi eigenvectors, projection.
    std::vector<double> mean(16, 0.0), cov(16 * 16, 0.0);
    for (int i = 0; i < 200; ++i)
      for (int b = 0; b < 16; ++b) mean[b] += X(i, b) / 200.0;
    for (int i = 0; i < 200; ++i)
      for (int p = 0; p < 16; ++p)
        for (int q = 0; q < 16; ++q) cov[p * 16 + q] += (X(i, p) - mean[p]) * (X(i, q) - mean[q]) / 199.0;
    const auto [values, vectors] = oracle::jacobi_eigen(cov, 16);
    double oracle_err2 = 0.0;
    for (int i = 0; i < 200; ++i) {
      std::vector<double> r(16);
      for (int b = 0; b < 16; ++b) r[b] = X(i, b) - mean[b];
      std::vector<double> rec(16, 0.0);
      for (int j = 0; j < 4; ++j) {
        double score = 0.0;
        for (int b = 0; b < 16; ++b) score += r[b] * vectors[b * 16 + j];
        for (int b = 0; b < 16; ++b) rec[b] += score * vectors[b * 16 + j];
      }
      for (int b = 0; b < 16; ++b) oracle_err2 += (r[b] - rec[b]) * (r[b] - rec[b]);
    }
    const double err = reconstruction_error(d, X);
    CHECK(oracle::relative_error(err, std::sqrt(oracle_err2)) < 1e-6);

    for (int j = 0; j < 4; ++j) {
      CHECK(oracle::relative_error(d.explained_variance(j), values[j]) < 1e-8);
      double dot = 0.0;
      for (int b = 0; b < 16; ++b) dot += d.loadings(b, j) * vectors[b * 16 + j];
      CHECK(std::abs(std::abs(dot) - 1.0) < 1e-8);
    }
  }
}

TEST_CASE("PCA and TSVD loadings are orthonormal; variance and error ordered in c") {
  const MatrixXd X = structured_matrix(150, 12, 5, 9);
  for (auto m : {DecompositionMethod::PCA, DecompositionMethod::TSVD}) {
    const Decomposer d = fit(m, X, 6, 1);
    const MatrixXd gram = d.loadings.transpose() * d.loadings;
    CHECK((gram - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-6);
  }
  const Decomposer pca = fit(DecompositionMethod::PCA, X, 12, 1);
  for (int j = 1; j < 12; ++j) CHECK(pca.explained_variance(j) <= pca.explained_variance(j - 1));
  double previous = INFINITY;
  for (std::size_t c = 1; c <= 12; ++c) {
    const double err = reconstruction_error(fit(DecompositionMethod::PCA, X, c, 1), X);
    CHECK(err <= previous + 1e-9);
    previous = err;
  }
}

TEST_CASE("PCA scores are centred on the fit data") {
  const MatrixXd X = structured_matrix(120, 10, 4, 2);
  const MatrixXd scores = transform(fit(DecompositionMethod::PCA, X, 5, 1), X);
  CHECK(scores.colwise().mean().cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("TSVD on pre-centred data equals PCA scores up to column sign") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const MatrixXd raw = structured_matrix(100, 9, 4, seed);
    const MatrixXd X = raw.rowwise() - raw.colwise().mean();
    const MatrixXd a = transform(fit(DecompositionMethod::PCA, X, 3, 1), X);
    const MatrixXd b = transform(fit(DecompositionMethod::TSVD, X, 3, 1), X);
    CHECK((a.cwiseAbs() - b.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-8 * a.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("FA log-likelihood is nondecreasing over EM iterations and matches the density") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const MatrixXd X = structured_matrix(300, 10, 3, seed);
    const Decomposer d = fit(DecompositionMethod::FA, X, 3, seed);
    const auto& trace = d.info.objective_trace;
    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1] - 1e-9 * std::abs(trace[i - 1]));
    CHECK(d.info.iterations <= 1000);
    CHECK((d.noise_variance.array() > 0.0).all());

    const MatrixXd centered = X.rowwise() - d.mean.transpose();
    const double direct = direct_log_likelihood(centered, d.loadings, d.noise_variance);
    CHECK(oracle::relative_error(d.info.objective, direct) < 1e-9);
    CHECK(oracle::relative_error(factor_log_likelihood(centered, d.loadings, d.noise_variance), direct) < 1e-9);
  }
}

TEST_CASE("FA scores follow the regression formula") {
  const MatrixXd X = structured_matrix(200, 8, 2, 4);
  const Decomposer d = fit(DecompositionMethod::FA, X, 2, 1);
  const MatrixXd psi_inv = d.noise_variance.cwiseInverse().asDiagonal();
  const MatrixXd M = MatrixXd::Identity(2, 2) + d.loadings.transpose() * psi_inv * d.loadings;
  const MatrixXd expected =
      (M.inverse() * d.loadings.transpose() * psi_inv * (X.rowwise() - d.mean.transpose()).transpose()).transpose();
  CHECK((transform(d, X) - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("NMF objective is nonincreasing; basis and coefficients are nonnegative") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const MatrixXd X = structured_matrix(120, 10, 3, seed).cwiseAbs();
    const Decomposer d = fit(DecompositionMethod::NMF, X, 3, seed);
    const auto& trace = d.info.objective_trace;
    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] * (1.0 + 1e-12));
    CHECK(d.info.iterations <= 200);
    CHECK(d.loadings.minCoeff() >= 0.0);
    CHECK(d.shift == 0.0);
    CHECK(transform(d, X).minCoeff() >= 0.0);
  }
}

TEST_CASE("NMF on data with negatives records a shift and stays nonnegative") {
  const MatrixXd X = random_matrix(80, 6, 3);
  const Decomposer d = fit(DecompositionMethod::NMF, X, 2, 1);
  CHECK(d.shift == doctest::Approx(-X.minCoeff()));
  CHECK(transform(d, X).minCoeff() >= 0.0);
  CHECK(transform(d, X * 3.0).minCoeff() >= 0.0);  // beyond the fitted range
}

TEST_CASE("fits are deterministic under a fixed seed") {
  const MatrixXd X = structured_matrix(90, 7, 3, 8).cwiseAbs();
  for (auto m : {DecompositionMethod::PCA, DecompositionMethod::FA, DecompositionMethod::TSVD,
                 DecompositionMethod::NMF}) {
    const Decomposer a = fit(m, X, 3, 42);
    const Decomposer b = fit(m, X, 3, 42);
    CHECK(a.loadings == b.loadings);
    CHECK(transform(a, X) == transform(b, X));
  }
}

TEST_CASE("transform checks the band count") {
  const MatrixXd X = random_matrix(40, 5, 1);
  const Decomposer d = fit(DecompositionMethod::PCA, X, 2, 1);
  CHECK_THROWS_AS(transform(d, random_matrix(10, 6, 2)), ValidationError);
}

TEST_CASE("transform does not depend on the thread count") {
  const MatrixXd X = structured_matrix(5000, 12, 4, 3).cwiseAbs();
  for (auto m : {DecompositionMethod::PCA, DecompositionMethod::FA, DecompositionMethod::NMF}) {
    const Decomposer d = fit(m, X.topRows(500), 4, 1);
    omp_set_num_threads(1);
    const MatrixXd one = transform(d, X);
    omp_set_num_threads(4);
    const MatrixXd four = transform(d, X);
    omp_set_num_threads(1);
    CHECK(one == four);
  }
}

TEST_CASE("reduce_cube: output bands follow c; full-rank PCA is lossless") {
  Rng rng(11);
  const HSICube cube = testing::random_cube(12, 10, 16, rng);
  CHECK(reduce_cube(cube, DecompositionMethod::FA, 9, 1).cube.bands == 9);
  CHECK(reduce_cube(cube, DecompositionMethod::FA, 12, 1).cube.bands == 12);

  const ReducedCube full = reduce_cube(cube, DecompositionMethod::PCA, 16, 1);
  CHECK(full.cube.height == 12);
  CHECK(full.cube.width == 10);
  const MatrixXd X = cube_to_matrix(cube);
  const MatrixXd back = inverse_transform(full.decomposer, cube_to_matrix(full.cube));
  CHECK((back - X).norm() < 1e-5 * X.norm());
}

TEST_CASE("reduce_cube can fit on a pixel subset") {
  Rng rng(12);
  const HSICube cube = testing::random_cube(8, 8, 6, rng);
  std::vector<std::size_t> pixels;
  for (std::size_t i = 0; i < 64; i += 3) pixels.push_back(i);
  const ReducedCube r = reduce_cube(cube, DecompositionMethod::PCA, 3, 1, std::span<const std::size_t>(pixels));

  const MatrixXd X = cube_to_matrix(cube);
  MatrixXd sub(static_cast<Eigen::Index>(pixels.size()), 6);
  for (std::size_t i = 0; i < pixels.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = X.row(pixels[i]);
  const Decomposer direct = fit(DecompositionMethod::PCA, sub, 3, 1);
  CHECK((r.decomposer.loadings - direct.loadings).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decomposer save/load reproduces transforms bit-exactly") {
  testing::ScratchDir dir("dec");
  Rng rng(13);
  const HSICube cube = testing::random_cube(9, 9, 8, rng);
  for (auto m : {DecompositionMethod::PCA, DecompositionMethod::FA, DecompositionMethod::TSVD,
                 DecompositionMethod::NMF}) {
    const ReducedCube r = reduce_cube(cube, m, 3, 7);
    save_decomposer(r.decomposer, dir / "d.hdr");
    const Decomposer back = load_decomposer(dir / "d.hdr");
    CHECK(back.method == m);
    CHECK(back.components == 3);
    CHECK(apply_decomposer(back, cube).data == r.cube.data);
  }
}

TEST_CASE("method names parse case-insensitively; SVD means TSVD") {
  CHECK(parse_decomposition_method("pca") == DecompositionMethod::PCA);
  CHECK(parse_decomposition_method("Fa") == DecompositionMethod::FA);
  CHECK(parse_decomposition_method("SVD") == DecompositionMethod::TSVD);
  CHECK(parse_decomposition_method("tsvd") == DecompositionMethod::TSVD);
  CHECK(parse_decomposition_method("NMF") == DecompositionMethod::NMF);
  CHECK_THROWS_AS(parse_decomposition_method("ica"), ValidationError);
}
