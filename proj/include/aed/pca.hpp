#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "aed/binary_io.hpp"
#include "aed/common.hpp"

namespace aed {

/// Principal-component projection onto the top-k eigenvectors of the sample
/// covariance.
struct PcaModel {
  std::vector<double> mean;                 // d
  MatrixD components;                       // k x d, orthonormal rows
  std::vector<double> explained_variance;   // k, non-increasing

  std::size_t input_dim() const noexcept { return mean.size(); }
  std::size_t output_dim() const noexcept { return components.rows(); }

  std::vector<double> transform(std::span<const double> x) const {
    check_dim(x.size(), input_dim(), "pca_transform");
    std::vector<double> out(output_dim(), 0.0);
    for (std::size_t c = 0; c < output_dim(); ++c) {
      auto comp = components.row(c);
      double acc = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) acc += (x[j] - mean[j]) * comp[j];
      out[c] = acc;
    }
    return out;
  }

  MatrixD transform(const MatrixD& x) const {
    MatrixD out(x.rows(), output_dim());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto y = transform(x.row(i));
      std::copy(y.begin(), y.end(), out.row(i).begin());
    }
    return out;
  }

  friend bool operator==(const PcaModel&, const PcaModel&) = default;
};

/// Fits PCA with k components. Uses the d x d covariance when n > d and the
/// n x n Gram matrix of centred data otherwise; both give the same spectrum.
/// Each component is signed so its largest-magnitude entry is positive.
inline PcaModel pca_fit(const MatrixD& features, std::size_t k) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (n < 2) fail_validation("pca_fit: need at least 2 samples, got ", n);
  if (k < 1 || k > std::min(n - 1, d))
    fail_validation("pca_fit: k=", k, " outside [1, min(n-1, d)] = [1, ", std::min(n - 1, d), "]");

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> x(features.data().data(), static_cast<Eigen::Index>(n),
                               static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mu;
  const double denom = static_cast<double>(n - 1);

  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;  // columns in feature space
  if (n - 1 >= d) {
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw RuntimeError("pca_fit: eigen solver failed");
    eigenvalues = solver.eigenvalues();
    eigenvectors = solver.eigenvectors();
  } else {
    const Eigen::MatrixXd gram = (centered * centered.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw RuntimeError("pca_fit: eigen solver failed");
    eigenvalues = solver.eigenvalues();
    eigenvectors = centered.transpose() * solver.eigenvectors();
    for (Eigen::Index c = 0; c < eigenvectors.cols(); ++c) {
      const double norm = eigenvectors.col(c).norm();
      if (norm > 0.0) eigenvectors.col(c) /= norm;
    }
  }

  const double total = eigenvalues.cwiseMax(0.0).sum();
  if (!(total > 0.0)) fail_validation("pca_fit: data has zero covariance");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(eigenvalues.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return eigenvalues(a) > eigenvalues(b); });

  PcaModel model;
  model.mean.assign(mu.data(), mu.data() + d);
  model.components = MatrixD(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::Index src = order[c];
    Eigen::VectorXd v = eigenvectors.col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    std::copy(v.data(), v.data() + d, model.components.row(c).begin());
    model.explained_variance.push_back(std::max(0.0, eigenvalues(src)));
  }
  return model;
}

inline std::vector<double> pca_transform(const PcaModel& model, std::span<const double> x) {
  return model.transform(x);
}

inline void serialize(BlobWriter& w, const PcaModel& m) {
  w.put_header("PCA ", 1, 0);
  w.put_vector(m.mean);
  w.put_matrix(m.components);
  w.put_vector(m.explained_variance);
}

inline PcaModel deserialize_pca(BlobReader& r) {
  r.expect_header("PCA ", 1);
  PcaModel m;
  m.mean = r.get_vector<double>();
  m.components = r.get_matrix<double>();
  m.explained_variance = r.get_vector<double>();
  if (m.components.cols() != m.mean.size() || m.explained_variance.size() != m.components.rows())
    fail_validation("PCA blob has inconsistent dimensions");
  return m;
}

}  // namespace aed
