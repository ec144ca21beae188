#include <gtest/gtest.h>

#include <cmath>

#include "aed/pca.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace aed;

TEST(Pca, LineYEqualsX) {
  MatrixD x(5, 2, std::vector<double>{-2, -2, -1, -1, 0, 0, 1, 1, 2, 2});
  const auto m = pca_fit(x, 1);
  ASSERT_EQ(m.output_dim(), 1u);
  EXPECT_NEAR(m.components(0, 0), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(m.components(0, 1), std::sqrt(0.5), 1e-12);
  const auto full = pca_fit(x, 1);
  EXPECT_NEAR(full.explained_variance[0], 5.0, 1e-12);  // var(x)+var(y) = 2.5+2.5
  // The point (1,1) is distance c=1 along each axis from the mean.
  const std::vector<double> p{1.0, 1.0};
  EXPECT_NEAR(m.transform(p)[0], std::sqrt(2.0), 1e-12);
  const std::vector<double> q{-2.0, -2.0};
  EXPECT_NEAR(m.transform(q)[0], -2.0 * std::sqrt(2.0), 1e-12);
  // Second eigenvalue: fit on the same data with d = 2 and k = 1 leaves
  // nothing unexplained; the Gram path sees it too.
  auto oracle_eig = oracle::jacobi_eigen(oracle::covariance(testutil::to_rows(x)));
  EXPECT_NEAR(oracle_eig.values[1], 0.0, 1e-12);
}

TEST(Pca, FullRankReconstruction) {
  const auto x = testutil::random_matrix(40, 6, 3);
  const auto m = pca_fit(x, 6);
  double err = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto y = m.transform(x.row(i));
    for (std::size_t j = 0; j < 6; ++j) {
      double rec = m.mean[j];
      for (std::size_t c = 0; c < 6; ++c) rec += y[c] * m.components(c, j);
      err += (rec - x(i, j)) * (rec - x(i, j));
      norm += x(i, j) * x(i, j);
    }
  }
  EXPECT_LT(std::sqrt(err / norm), 1e-5);
}

TEST(Pca, EigenvaluesMatchJacobiOracle) {
  const auto x = testutil::random_matrix(32, 8, 11);
  const auto m = pca_fit(x, 7);
  const auto e = oracle::jacobi_eigen(oracle::covariance(testutil::to_rows(x)));
  for (std::size_t k = 0; k < 7; ++k) {
    EXPECT_NEAR(m.explained_variance[k], e.values[k], 1e-6 * e.values[k]) << k;
    // Components agree up to sign.
    double dot = 0.0;
    for (std::size_t j = 0; j < 8; ++j) dot += m.components(k, j) * e.vectors[k][j];
    EXPECT_NEAR(std::abs(dot), 1.0, 1e-6) << k;
  }
}

TEST(Pca, GramPathMatchesCovariancePath) {
  // n - 1 < d forces the Gram-matrix route.
  const auto x = testutil::random_matrix(6, 20, 5);
  const auto m = pca_fit(x, 5);
  const auto e = oracle::jacobi_eigen(oracle::covariance(testutil::to_rows(x)));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(m.explained_variance[k], e.values[k], 1e-6 * e.values[0]);
}

TEST(Pca, ComponentsOrthonormalAndSigned) {
  const auto x = testutil::random_matrix(50, 10, 7);
  const auto m = pca_fit(x, 4);
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 10; ++j) dot += m.components(a, j) * m.components(b, j);
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-6);
    }
    std::size_t arg = 0;
    for (std::size_t j = 1; j < 10; ++j)
      if (std::abs(m.components(a, j)) > std::abs(m.components(a, arg))) arg = j;
    EXPECT_GT(m.components(a, arg), 0.0);
    if (a > 0) {
      EXPECT_LE(m.explained_variance[a], m.explained_variance[a - 1]);
    }
  }
}

TEST(Pca, TransformExamples) {
  const auto x = testutil::random_matrix(30, 5, 9);
  const auto m = pca_fit(x, 3);
  const auto zero = m.transform(m.mean);
  for (double v : zero) EXPECT_NEAR(v, 0.0, 1e-12);
  std::vector<double> shifted = m.mean;
  for (std::size_t j = 0; j < 5; ++j) shifted[j] += m.components(0, j);
  const auto unit = m.transform(shifted);
  EXPECT_NEAR(unit[0], 1.0, 1e-12);
  EXPECT_NEAR(unit[1], 0.0, 1e-12);
  EXPECT_NEAR(unit[2], 0.0, 1e-12);
  // Direct dense multiply.
  aed::Rng rng(4);
  std::vector<double> q(5);
  for (auto& v : q) v = rng.normal();
  const auto y = m.transform(q);
  for (std::size_t c = 0; c < 3; ++c) {
    long double acc = 0;
    for (std::size_t j = 0; j < 5; ++j) acc += (q[j] - m.mean[j]) * m.components(c, j);
    EXPECT_NEAR(y[c], static_cast<double>(acc), 1e-12);
  }
}

TEST(Pca, ProjectionShrinksAndVarianceBounded) {
  const auto x = testutil::random_matrix(60, 12, 21, 2.0);
  const auto m = pca_fit(x, 5);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto y = m.transform(x.row(i));
    double py = 0.0, pc = 0.0;
    for (double v : y) py += v * v;
    for (std::size_t j = 0; j < 12; ++j) pc += (x(i, j) - m.mean[j]) * (x(i, j) - m.mean[j]);
    EXPECT_LE(py, pc + 1e-9);
  }
  const auto sd = oracle::column_std(testutil::to_rows(x));
  double total = 0.0, explained = 0.0;
  for (double s : sd) total += s * s;
  for (double v : m.explained_variance) explained += v;
  EXPECT_LE(explained, total + 1e-6);
}

TEST(Pca, Errors) {
  EXPECT_THROW(pca_fit(testutil::random_matrix(1, 3, 1), 1), ValidationError);
  EXPECT_THROW(pca_fit(testutil::random_matrix(5, 3, 1), 4), ValidationError);
  EXPECT_THROW(pca_fit(testutil::random_matrix(5, 3, 1), 0), ValidationError);
  EXPECT_THROW(pca_fit(MatrixD(5, 3, 1.0), 1), ValidationError);
  const auto m = pca_fit(testutil::random_matrix(5, 3, 1), 2);
  const std::vector<double> bad(4, 0.0);
  EXPECT_THROW(m.transform(bad), ValidationError);
}

TEST(Pca, SerializationRoundTrip) {
  const auto m = pca_fit(testutil::random_matrix(20, 6, 2), 3);
  BlobWriter w;
  serialize(w, m);
  BlobReader r(w.bytes());
  EXPECT_EQ(deserialize_pca(r), m);
}
