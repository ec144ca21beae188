#pragma once

// Product quantization: the vector is split into m equal subvectors, each
// quantized against its own k-means codebook of 2^bits centroids. Distances
// from a raw query to coded vectors use asymmetric distance computation
// (query stays exact, database side is replaced by its centroids).

#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "aed/binary_io.hpp"
#include "aed/common.hpp"
#include "aed/rng.hpp"

namespace aed {

struct PqConfig {
  std::size_t subvectors = 16;
  unsigned bits = 8;
  unsigned iterations = 25;
  std::uint64_t seed = 0;
  bool l2_normalize = false;
};

/// Centroid index per subspace.
using PqCode = std::vector<std::uint16_t>;

class PqCodebook {
 public:
  static constexpr unsigned kMaxBits = 16;

  PqCodebook() = default;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t subvectors() const noexcept { return m_; }
  unsigned bits() const noexcept { return bits_; }
  std::size_t centroids_per_subspace() const noexcept { return std::size_t{1} << bits_; }
  std::size_t subvector_dim() const noexcept { return m_ == 0 ? 0 : dim_ / m_; }
  std::size_t code_length_bits() const noexcept { return m_ * bits_; }
  bool trained() const noexcept { return trained_; }
  bool l2_normalize() const noexcept { return l2_normalize_; }

  /// Centroid `c` of subspace `s`.
  std::span<const float> centroid(std::size_t s, std::size_t c) const {
    const std::size_t ds = subvector_dim();
    return {centroids_.data() + (s * centroids_per_subspace() + c) * ds, ds};
  }

  /// Total quantization error of the training set after each k-means
  /// iteration (summed over subspaces). Non-increasing.
  const std::vector<double>& training_error() const noexcept { return error_history_; }

  PqCode encode(std::span<const double> x) const {
    require_trained();
    check_dim(x.size(), dim_, "pq_encode");
    const auto v = prepare(x);
    const std::size_t ds = subvector_dim();
    PqCode code(m_);
    for (std::size_t s = 0; s < m_; ++s) {
      std::span<const double> sub(v.data() + s * ds, ds);
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_c = 0;
      for (std::size_t c = 0; c < centroids_per_subspace(); ++c) {
        const double d = sub_distance(sub, centroid(s, c));
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      code[s] = static_cast<std::uint16_t>(best_c);
    }
    return code;
  }

  std::vector<double> decode(const PqCode& code) const {
    require_trained();
    check_code(code);
    std::vector<double> out;
    out.reserve(dim_);
    for (std::size_t s = 0; s < m_; ++s) {
      auto c = centroid(s, code[s]);
      out.insert(out.end(), c.begin(), c.end());
    }
    return out;
  }

  /// m x 2^bits table of squared distances from the query's subvectors to
  /// every centroid.
  std::vector<double> distance_table(std::span<const double> query) const {
    require_trained();
    check_dim(query.size(), dim_, "pq_adc_distance");
    const auto q = prepare(query);
    const std::size_t ds = subvector_dim();
    const std::size_t k = centroids_per_subspace();
    std::vector<double> table(m_ * k);
    for (std::size_t s = 0; s < m_; ++s) {
      std::span<const double> sub(q.data() + s * ds, ds);
      for (std::size_t c = 0; c < k; ++c) table[s * k + c] = sub_distance(sub, centroid(s, c));
    }
    return table;
  }

  double adc_from_table(std::span<const double> table, const PqCode& code) const noexcept {
    const std::size_t k = centroids_per_subspace();
    double acc = 0.0;
    for (std::size_t s = 0; s < m_; ++s) acc += table[s * k + code[s]];
    return acc;
  }

  /// Squared asymmetric distance between a raw query and a coded vector.
  double adc_distance(std::span<const double> query, const PqCode& code) const {
    check_code(code);
    return adc_from_table(distance_table(query), code);
  }

  /// Bit-packs a code, LSB first: exactly ceil(m * bits / 8) bytes.
  std::vector<std::uint8_t> pack(const PqCode& code) const {
    check_code(code);
    std::vector<std::uint8_t> bytes((code_length_bits() + 7) / 8, 0);
    std::size_t bit = 0;
    for (auto idx : code)
      for (unsigned b = 0; b < bits_; ++b, ++bit)
        if ((idx >> b) & 1u) bytes[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    return bytes;
  }

  PqCode unpack(std::span<const std::uint8_t> bytes) const {
    if (bytes.size() != (code_length_bits() + 7) / 8)
      fail_validation("packed PQ code has ", bytes.size(), " bytes, expected ",
                      (code_length_bits() + 7) / 8);
    PqCode code(m_, 0);
    std::size_t bit = 0;
    for (auto& idx : code)
      for (unsigned b = 0; b < bits_; ++b, ++bit)
        if ((bytes[bit / 8] >> (bit % 8)) & 1u) idx = static_cast<std::uint16_t>(idx | (1u << b));
    return code;
  }

  std::vector<double> prepare(std::span<const double> x) const {
    std::vector<double> v(x.begin(), x.end());
    if (l2_normalize_) {
      double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      if (norm > 0.0)
        for (auto& e : v) e /= norm;
    }
    return v;
  }

  friend PqCodebook pq_train(const MatrixD& features, const PqConfig& config);
  friend void serialize(BlobWriter& w, const PqCodebook& cb);
  friend PqCodebook deserialize_pq(BlobReader& r);
  friend bool operator==(const PqCodebook&, const PqCodebook&) = default;

 private:
  static double sub_distance(std::span<const double> a, std::span<const float> c) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - static_cast<double>(c[i]);
      acc += d * d;
    }
    return acc;
  }
  void require_trained() const {
    if (!trained_) fail_validation("PQ codebook is not trained");
  }
  void check_code(const PqCode& code) const {
    if (code.size() != m_) fail_validation("PQ code has ", code.size(), " entries, expected ", m_);
    for (auto c : code)
      if (c >= centroids_per_subspace()) fail_validation("PQ code index ", c, " out of range");
  }

  std::size_t dim_ = 0;
  std::size_t m_ = 0;
  unsigned bits_ = 0;
  bool l2_normalize_ = false;
  bool trained_ = false;
  std::vector<float> centroids_;  // m x 2^bits x (dim / m)
  std::vector<double> error_history_;
};

namespace detail {

/// Lloyd's k-means on an n x ds row-major block with k-means++ seeding.
/// Empty clusters are re-seeded from the points farthest from their
/// centroid. Returns centroids (k x ds) and appends the assignment error of
/// every iteration to `history`.
inline std::vector<double> kmeans(const std::vector<double>& data, std::size_t n, std::size_t ds,
                                  std::size_t k, unsigned iterations, Rng& rng,
                                  std::vector<double>& history) {
  auto point = [&](std::size_t i) { return std::span<const double>(data.data() + i * ds, ds); };
  std::vector<double> centroids(k * ds, 0.0);
  auto centroid = [&](std::size_t c) { return std::span<double>(centroids.data() + c * ds, ds); };

  // k-means++ seeding
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pick = 0;
    double total = 0.0;
    if (c > 0)
      for (double v : d2) total += v;
    if (c == 0 || !(total > 0.0)) {
      pick = rng.below(n);
    } else {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    std::copy(point(pick).begin(), point(pick).end(), centroid(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_l2(point(i), centroid(c)));
  }

  std::vector<std::size_t> assign(n, k);
  std::vector<double> dist(n, 0.0);
  std::vector<double> sums(k * ds);
  std::vector<std::size_t> counts(k);
  for (unsigned it = 0; it < std::max(1u, iterations); ++it) {
    bool changed = false;
    double error = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_l2(point(i), centroid(c));
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      changed |= assign[i] != best_c;
      assign[i] = best_c;
      dist[i] = best;
      error += best;
    }
    history.push_back(error);
    if (!changed || iterations == 0) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      auto p = point(i);
      for (std::size_t j = 0; j < ds; ++j) sums[assign[i] * ds + j] += p[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < ds; ++j)
        centroid(c)[j] = sums[c * ds + j] / static_cast<double>(counts[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      const auto far = static_cast<std::size_t>(
          std::max_element(dist.begin(), dist.end()) - dist.begin());
      std::copy(point(far).begin(), point(far).end(), centroid(c).begin());
      dist[far] = 0.0;
    }
  }
  return centroids;
}

}  // namespace detail

/// Trains per-subspace k-means codebooks. Deterministic for a given seed;
/// subspace s uses seed derive_seed(seed, s).
inline PqCodebook pq_train(const MatrixD& features, const PqConfig& config) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (n == 0) fail_validation("pq_train: empty training set");
  if (config.subvectors == 0 || d % config.subvectors != 0)
    fail_validation("pq_train: ", config.subvectors, " subvectors do not divide dimension ", d);
  if (config.bits > PqCodebook::kMaxBits)
    fail_validation("pq_train: bits per subvector must be <= ", PqCodebook::kMaxBits);

  PqCodebook cb;
  cb.dim_ = d;
  cb.m_ = config.subvectors;
  cb.bits_ = config.bits;
  cb.l2_normalize_ = config.l2_normalize;
  const std::size_t k = cb.centroids_per_subspace();
  const std::size_t ds = d / cb.m_;
  if (n < k) warn("pq_train: ", n, " training vectors for ", k, " centroids per subspace");

  std::vector<double> prepared(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    auto v = cb.prepare(features.row(i));
    std::copy(v.begin(), v.end(), prepared.begin() + static_cast<std::ptrdiff_t>(i * d));
  }

  cb.centroids_.assign(cb.m_ * k * ds, 0.0f);
  std::vector<std::vector<double>> histories(cb.m_);
  std::vector<double> block(n * ds);
  for (std::size_t s = 0; s < cb.m_; ++s) {
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(prepared.begin() + static_cast<std::ptrdiff_t>(i * d + s * ds), ds,
                  block.begin() + static_cast<std::ptrdiff_t>(i * ds));
    Rng rng(derive_seed(config.seed, s));
    auto centroids = detail::kmeans(block, n, ds, k, config.iterations, rng, histories[s]);
    std::transform(centroids.begin(), centroids.end(),
                   cb.centroids_.begin() + static_cast<std::ptrdiff_t>(s * k * ds),
                   [](double v) { return static_cast<float>(v); });
  }

  std::size_t rounds = 0;
  for (const auto& h : histories) rounds = std::max(rounds, h.size());
  for (std::size_t r = 0; r < rounds; ++r) {
    double total = 0.0;
    for (const auto& h : histories) total += h[std::min(r, h.size() - 1)];
    cb.error_history_.push_back(total);
  }
  cb.trained_ = true;
  return cb;
}

inline PqCode pq_encode(const PqCodebook& cb, std::span<const double> x) { return cb.encode(x); }

inline double pq_adc_distance(const PqCodebook& cb, std::span<const double> query,
                              const PqCode& code) {
  return cb.adc_distance(query, code);
}

inline void serialize(BlobWriter& w, const PqCodebook& cb) {
  w.put_header("PQCB", 1, 0);
  w.put<std::uint64_t>(cb.dim_);
  w.put<std::uint64_t>(cb.m_);
  w.put<std::uint32_t>(cb.bits_);
  w.put<std::uint8_t>(cb.l2_normalize_ ? 1 : 0);
  w.put_vector(cb.centroids_);
}

inline PqCodebook deserialize_pq(BlobReader& r) {
  r.expect_header("PQCB", 1);
  PqCodebook cb;
  cb.dim_ = r.get<std::uint64_t>();
  cb.m_ = r.get<std::uint64_t>();
  cb.bits_ = r.get<std::uint32_t>();
  cb.l2_normalize_ = r.get<std::uint8_t>() != 0;
  cb.centroids_ = r.get_vector<float>();
  if (cb.m_ == 0 || cb.dim_ % cb.m_ != 0 || cb.bits_ > PqCodebook::kMaxBits ||
      cb.centroids_.size() != cb.m_ * cb.centroids_per_subspace() * cb.subvector_dim())
    fail_validation("PQ blob has inconsistent dimensions");
  cb.trained_ = true;
  return cb;
}

}  // namespace aed
