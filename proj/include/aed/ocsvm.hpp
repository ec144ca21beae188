#pragma once

// One-class SVM (Schoelkopf et al.) with RBF kernel, trained on the dual
//
//   min_a  1/2 a^T Q a   s.t.  0 <= a_i <= 1/(nu n),  sum_i a_i = 1,
//
// with Q_ij = exp(-gamma |x_i - x_j|^2). Solved by SMO with second-order
// working-set selection (Fan, Chen & Lin 2005). Kernel columns are computed
// on demand; inputs are expected to be low dimensional (PCA-reduced).

#include <cmath>
#include <limits>
#include <vector>

#include "aed/binary_io.hpp"
#include "aed/common.hpp"

namespace aed {

struct OcSvmParams {
  double nu = 0.1;
  double gamma = 0.001;
  double tolerance = 1e-4;
  std::size_t max_iterations = 100000;
};

struct OcSvmSolution {
  std::vector<double> alpha;     // one per training sample
  std::vector<double> gradient;  // Q alpha
  double rho = 0.0;
  double objective = 0.0;
  std::size_t iterations = 0;
  double upper_bound = 0.0;      // 1 / (nu n)
};

inline double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  return std::exp(-gamma * squared_l2(a, b));
}

inline OcSvmSolution solve_ocsvm_dual(const MatrixD& x, const OcSvmParams& params) {
  const std::size_t n = x.rows();
  if (n < 2) fail_validation("ocsvm_fit: need at least 2 samples, got ", n);
  if (!(params.nu > 0.0 && params.nu <= 1.0)) fail_validation("ocsvm_fit: nu must be in (0, 1]");
  if (!(params.gamma > 0.0)) fail_validation("ocsvm_fit: gamma must be positive");

  OcSvmSolution sol;
  const double c = 1.0 / (params.nu * static_cast<double>(n));
  sol.upper_bound = c;
  sol.alpha.assign(n, 0.0);
  {
    const double mass = params.nu * static_cast<double>(n);
    const auto full = std::min(n, static_cast<std::size_t>(std::floor(mass)));
    for (std::size_t i = 0; i < full; ++i) sol.alpha[i] = c;
    if (full < n) sol.alpha[full] = std::max(0.0, 1.0 - static_cast<double>(full) * c);
  }

  auto column = [&](std::size_t i, std::vector<double>& out) {
    out.resize(n);
    for (std::size_t t = 0; t < n; ++t) out[t] = t == i ? 1.0 : rbf_kernel(x.row(i), x.row(t), params.gamma);
  };
  auto at_upper = [&](std::size_t t) { return sol.alpha[t] >= c; };
  auto at_lower = [&](std::size_t t) { return sol.alpha[t] <= 0.0; };

  sol.gradient.assign(n, 0.0);
  std::vector<double> qi, qj;
  for (std::size_t t = 0; t < n; ++t) {
    if (sol.alpha[t] == 0.0) continue;
    column(t, qi);
    for (std::size_t s = 0; s < n; ++s) sol.gradient[s] += sol.alpha[t] * qi[s];
  }

  constexpr double kTau = 1e-12;
  bool converged = false;
  for (; sol.iterations < params.max_iterations; ++sol.iterations) {
    // i: steepest feasible ascent of alpha; gap = max violation.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!at_upper(t) && -sol.gradient[t] > gmax) {
        gmax = -sol.gradient[t];
        i = t;
      }
      if (!at_lower(t)) gmax2 = std::max(gmax2, sol.gradient[t]);
    }
    if (i == n || gmax + gmax2 < params.tolerance) {
      converged = true;
      break;
    }

    column(i, qi);
    std::size_t j = n;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (at_lower(t)) continue;
      const double b = gmax + sol.gradient[t];
      if (b <= 0.0) continue;
      double a = 2.0 - 2.0 * qi[t];  // Q_ii + Q_tt - 2 Q_it with unit diagonal
      if (a <= 0.0) a = kTau;
      const double obj = -(b * b) / a;
      if (obj < best) {
        best = obj;
        j = t;
      }
    }
    if (j == n) {
      converged = true;
      break;
    }

    double a = 2.0 - 2.0 * qi[j];
    if (a <= 0.0) a = kTau;
    double delta = (sol.gradient[j] - sol.gradient[i]) / a;
    delta = std::min({delta, c - sol.alpha[i], sol.alpha[j]});
    if (!(delta > 0.0)) {
      converged = true;
      break;
    }
    sol.alpha[i] += delta;
    sol.alpha[j] -= delta;
    if (sol.alpha[i] >= c - 1e-15 * c) sol.alpha[i] = c;
    if (sol.alpha[j] <= 1e-15 * c) sol.alpha[j] = 0.0;

    column(j, qj);
    for (std::size_t t = 0; t < n; ++t) sol.gradient[t] += delta * (qi[t] - qj[t]);
  }
  if (!converged)
    throw RuntimeError(detail::concat("ocsvm_fit: SMO did not converge within ",
                                      params.max_iterations, " iterations"));

  // Offset: mean gradient over free variables, else midpoint of the bounds.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (at_upper(t))
      lb = std::max(lb, sol.gradient[t]);
    else if (at_lower(t))
      ub = std::min(ub, sol.gradient[t]);
    else {
      sum_free += sol.gradient[t];
      ++n_free;
    }
  }
  if (n_free > 0)
    sol.rho = sum_free / static_cast<double>(n_free);
  else if (std::isinf(ub))
    sol.rho = lb;
  else if (std::isinf(lb))
    sol.rho = ub;
  else
    sol.rho = 0.5 * (ub + lb);

  for (std::size_t t = 0; t < n; ++t) sol.objective += 0.5 * sol.alpha[t] * sol.gradient[t];
  return sol;
}

/// Fitted one-class SVM. score(x) = rho - sum_i a_i k(x_i, x): positive
/// outside the learned support, larger is more anomalous.
class OcSvmDetector {
 public:
  static OcSvmDetector fit(const MatrixD& x, const OcSvmParams& params) {
    const auto sol = solve_ocsvm_dual(x, params);
    OcSvmDetector det;
    det.gamma_ = params.gamma;
    det.nu_ = params.nu;
    det.rho_ = sol.rho;
    det.objective_ = sol.objective;
    std::vector<std::size_t> sv;
    for (std::size_t i = 0; i < sol.alpha.size(); ++i)
      if (sol.alpha[i] > 0.0) {
        sv.push_back(i);
        det.coefficients_.push_back(sol.alpha[i]);
      }
    det.support_vectors_ = select_rows(x, sv);
    return det;
  }

  double decision(std::span<const double> x) const {
    check_dim(x.size(), support_vectors_.cols(), "ocsvm_score");
    double acc = 0.0;
    for (std::size_t i = 0; i < support_vectors_.rows(); ++i)
      acc += coefficients_[i] * rbf_kernel(support_vectors_.row(i), x, gamma_);
    return acc - rho_;
  }

  double score(std::span<const double> x) const { return -decision(x); }

  std::size_t input_dim() const noexcept { return support_vectors_.cols(); }
  const MatrixD& support_vectors() const noexcept { return support_vectors_; }
  const std::vector<double>& coefficients() const noexcept { return coefficients_; }
  double rho() const noexcept { return rho_; }
  double gamma() const noexcept { return gamma_; }
  double nu() const noexcept { return nu_; }
  double objective() const noexcept { return objective_; }

  void serialize(BlobWriter& w) const {
    w.put_header("OSVM", 1, 0);
    w.put(gamma_);
    w.put(nu_);
    w.put(rho_);
    w.put(objective_);
    w.put_matrix(support_vectors_);
    w.put_vector(coefficients_);
  }

  static OcSvmDetector deserialize(BlobReader& r) {
    r.expect_header("OSVM", 1);
    OcSvmDetector det;
    det.gamma_ = r.get<double>();
    det.nu_ = r.get<double>();
    det.rho_ = r.get<double>();
    det.objective_ = r.get<double>();
    det.support_vectors_ = r.get_matrix<double>();
    det.coefficients_ = r.get_vector<double>();
    if (det.coefficients_.size() != det.support_vectors_.rows())
      fail_validation("OC-SVM blob has inconsistent dimensions");
    return det;
  }

 private:
  MatrixD support_vectors_;
  std::vector<double> coefficients_;
  double rho_ = 0.0;
  double gamma_ = 0.0;
  double nu_ = 0.0;
  double objective_ = 0.0;
};

}  // namespace aed
