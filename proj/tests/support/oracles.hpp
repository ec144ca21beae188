#pragma once

// Reference implementations used only by tests. Each one is deliberately
// naive (brute force, textbook formula, or a different algorithm) so it
// shares no code path with the library under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i];
    acc += d * d;
  }
  return static_cast<double>(acc);
}

/// Minimum Euclidean distance from q to any row, optionally skipping one.
inline double nearest_distance(const Rows& train, const std::vector<double>& q,
                               std::size_t skip = static_cast<std::size_t>(-1)) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < train.size(); ++i)
    if (i != skip) best = std::min(best, sq_dist(train[i], q));
  return std::sqrt(best);
}

/// Sample standard deviation per column, two passes, n-1 denominator.
inline std::vector<double> column_std(const Rows& x) {
  const std::size_t n = x.size(), d = x.front().size();
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    long double mean = 0.0L;
    for (const auto& r : x) mean += r[j];
    mean /= n;
    long double ss = 0.0L;
    for (const auto& r : x) ss += (r[j] - mean) * (r[j] - mean);
    out[j] = static_cast<double>(std::sqrt(ss / (n - 1)));
  }
  return out;
}

inline std::vector<double> scott(const Rows& x) {
  auto s = column_std(x);
  const double f = std::pow(static_cast<double>(x.size()), -1.0 / (static_cast<double>(x.front().size()) + 4.0));
  for (auto& v : s) v *= f;
  return s;
}

/// p(q) = 1/n sum_i prod_j phi((q_j - x_ij)/h_j)/h_j by direct summation.
inline double kde_density(const Rows& x, const std::vector<double>& h, const std::vector<double>& q) {
  long double acc = 0.0L;
  for (const auto& r : x) {
    long double prod = 1.0L;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const long double z = (q[j] - r[j]) / h[j];
      prod *= std::exp(-0.5L * z * z) / (std::sqrt(2.0L * std::numbers::pi_v<long double>) * h[j]);
    }
    acc += prod;
  }
  return static_cast<double>(acc / x.size());
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns
/// eigenvalues in descending order; vectors[k] is the k-th eigenvector.
struct Eigen {
  std::vector<double> values;
  Rows vectors;
};

inline Eigen jacobi_eigen(Rows a) {
  const std::size_t n = a.size();
  Rows v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  Eigen e;
  for (auto i : order) {
    e.values.push_back(a[i][i]);
    std::vector<double> vec(n);
    for (std::size_t k = 0; k < n; ++k) vec[k] = v[k][i];
    e.vectors.push_back(std::move(vec));
  }
  return e;
}

inline Rows covariance(const Rows& x) {
  const std::size_t n = x.size(), d = x.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / n;
  Rows c(d, std::vector<double>(d, 0.0));
  for (const auto& r : x)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1);
  return c;
}

/// Solves A x = b by Gaussian elimination with partial pivoting. Returns
/// false when A is numerically singular.
inline bool solve(Rows a, std::vector<double> b, std::vector<double>& x) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-13) return false;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return true;
}

/// Global minimum of 1/2 a'Qa s.t. 0 <= a_i <= c, sum a = 1, found by
/// enumerating every (lower, upper, free) assignment of the n variables and
/// solving the stationarity system on the free ones. Exponential (3^n);
/// intended for n <= 10.
struct QpResult {
  double objective = std::numeric_limits<double>::infinity();
  std::vector<double> alpha;
};

inline QpResult ocsvm_dual_bruteforce(const Rows& q, double c) {
  const std::size_t n = q.size();
  QpResult best;
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= 3;
  std::vector<int> state(n);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    std::vector<std::size_t> free_idx;
    std::vector<double> alpha(n, 0.0);
    double fixed_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      state[i] = static_cast<int>(rest % 3);
      rest /= 3;
      if (state[i] == 1) {
        alpha[i] = c;
        fixed_mass += c;
      } else if (state[i] == 2) {
        free_idx.push_back(i);
      }
    }
    if (free_idx.empty()) {
      if (std::abs(fixed_mass - 1.0) > 1e-12) continue;
    } else {
      // [Q_FF  -1] [a_F]   [-Q_FU c 1]
      // [1'     0] [rho] = [1 - |U| c]
      const std::size_t f = free_idx.size();
      Rows a(f + 1, std::vector<double>(f + 1, 0.0));
      std::vector<double> b(f + 1, 0.0), x;
      for (std::size_t r = 0; r < f; ++r) {
        for (std::size_t k = 0; k < f; ++k) a[r][k] = q[free_idx[r]][free_idx[k]];
        a[r][f] = -1.0;
        for (std::size_t i = 0; i < n; ++i)
          if (state[i] == 1) b[r] -= q[free_idx[r]][i] * c;
        a[f][r] = 1.0;
      }
      b[f] = 1.0 - fixed_mass;
      if (!solve(a, b, x)) continue;
      bool feasible = true;
      for (std::size_t r = 0; r < f; ++r) {
        if (x[r] < -1e-12 || x[r] > c + 1e-12) feasible = false;
        alpha[free_idx[r]] = std::clamp(x[r], 0.0, c);
      }
      if (!feasible) continue;
    }
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) obj += 0.5 * alpha[i] * alpha[j] * q[i][j];
    if (obj < best.objective) {
      best.objective = obj;
      best.alpha = alpha;
    }
  }
  return best;
}

/// AUC as the fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  double good = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) good += 1.0;
      else if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / static_cast<double>(pairs);
}

/// PASCAL all-points AP: mean over positives of the best precision
/// achieved at or after that positive's rank.
inline double average_precision(const std::vector<bool>& ranked) {
  std::vector<double> precision;
  std::size_t tp = 0, positives = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (ranked[k]) ++tp;
    precision.push_back(static_cast<double>(tp) / (k + 1));
  }
  positives = tp;
  double sum = 0.0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (!ranked[k]) continue;
    double best = 0.0;
    for (std::size_t j = k; j < ranked.size(); ++j) best = std::max(best, precision[j]);
    sum += best;
  }
  return sum / positives;
}

/// Number of mask pixels whose centre lies in some box [x, x+w) x [y, y+h).
struct Box {
  double x, y, w, h;
};

inline std::size_t covered_pixels(int width, int height, const std::vector<std::uint8_t>& mask,
                                  const std::vector<Box>& boxes) {
  std::size_t count = 0;
  for (int py = 0; py < height; ++py)
    for (int px = 0; px < width; ++px) {
      if (!mask[static_cast<std::size_t>(py) * width + px]) continue;
      const double cx = px + 0.5, cy = py + 0.5;
      for (const auto& b : boxes)
        if (cx >= b.x && cx < b.x + b.w && cy >= b.y && cy < b.y + b.h) {
          ++count;
          break;
        }
    }
  return count;
}

/// Optimal 2-means cost on 1-D points by trying every split of the sorted
/// points.
inline double best_two_means_cost(std::vector<double> pts) {
  std::sort(pts.begin(), pts.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t cut = 1; cut < pts.size(); ++cut) {
    double cost = 0.0;
    for (int side = 0; side < 2; ++side) {
      const std::size_t lo = side ? cut : 0, hi = side ? pts.size() : cut;
      double mean = 0.0;
      for (std::size_t i = lo; i < hi; ++i) mean += pts[i];
      mean /= static_cast<double>(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) cost += (pts[i] - mean) * (pts[i] - mean);
    }
    best = std::min(best, cost);
  }
  return best;
}

}  // namespace oracle
