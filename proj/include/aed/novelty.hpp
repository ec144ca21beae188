#pragma once

// Novelty detectors: fit on normal features X, assign an anomaly score z(x)
// to a test feature (larger = more anomalous).
//
//   nn     distance to the nearest training sample (exact, or PQ/ADC)
//   ocsvm  negated one-class SVM decision value
//   kde    reciprocal of a Gaussian product-kernel density

#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aed/binary_io.hpp"
#include "aed/common.hpp"
#include "aed/ocsvm.hpp"
#include "aed/pca.hpp"
#include "aed/pq.hpp"

namespace aed {

/// Per-dimension Scott's-rule bandwidths h_j = s_j n^(-1/(d+4)), floored at
/// 1e-6 * max(1, mean nonzero s_j) so degenerate dimensions stay usable.
inline std::vector<double> scott_bandwidth(const MatrixD& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n < 2) fail_validation("scott_bandwidth: need at least 2 samples, got ", n);
  // Welford
  std::vector<double> mean(d, 0.0), m2(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double delta = row[j] - mean[j];
      mean[j] += delta / static_cast<double>(i + 1);
      m2[j] += delta * (row[j] - mean[j]);
    }
  }
  const double factor =
      std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
  std::vector<double> h(d);
  double sum_nonzero = 0.0;
  std::size_t count_nonzero = 0;
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(m2[j] / static_cast<double>(n - 1));
    if (sd > 0.0) {
      sum_nonzero += sd;
      ++count_nonzero;
    }
    h[j] = sd * factor;
  }
  const double mean_sd = count_nonzero ? sum_nonzero / static_cast<double>(count_nonzero) : 0.0;
  const double floor = 1e-6 * std::max(1.0, mean_sd);
  for (auto& v : h) v = std::max(v, floor);
  return h;
}

/// Exact nearest-neighbour detector over stored training vectors.
class NnExactDetector {
 public:
  static NnExactDetector fit(MatrixD x) {
    if (x.rows() == 0) fail_validation("nn_fit: empty training set");
    NnExactDetector det;
    det.train_ = std::move(x);
    return det;
  }

  double score(std::span<const double> x) const {
    check_dim(x.size(), train_.cols(), "nn_score");
    return std::sqrt(min_squared(x, train_.rows()));
  }

  /// Leave-one-out scores of the training samples.
  std::vector<double> training_scores() const {
    std::vector<double> out(train_.rows());
    for (std::size_t i = 0; i < train_.rows(); ++i) out[i] = std::sqrt(min_squared(train_.row(i), i));
    return out;
  }

  std::size_t input_dim() const noexcept { return train_.cols(); }
  const MatrixD& training_set() const noexcept { return train_; }

  void serialize(BlobWriter& w) const {
    w.put_header("NNEX", 1, 0);
    w.put_matrix(train_);
  }
  static NnExactDetector deserialize(BlobReader& r) {
    r.expect_header("NNEX", 1);
    return fit(r.get_matrix<double>());
  }

 private:
  double min_squared(std::span<const double> x, std::size_t skip) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < train_.rows(); ++i)
      if (i != skip) best = std::min(best, squared_l2(x, train_.row(i)));
    return best;
  }

  MatrixD train_;
};

/// Nearest neighbour over PQ codes; score is sqrt of the smallest ADC
/// distance so it shares units with the exact detector.
class NnPqDetector {
 public:
  static NnPqDetector fit(std::shared_ptr<const PqCodebook> codebook, const MatrixD& x) {
    if (x.rows() == 0) fail_validation("nn_fit: empty training set");
    if (!codebook || !codebook->trained()) fail_validation("nn_fit: PQ codebook not trained");
    check_dim(x.cols(), codebook->dim(), "nn_fit");
    NnPqDetector det;
    det.codebook_ = std::move(codebook);
    for (std::size_t i = 0; i < x.rows(); ++i) det.codes_.push_back(det.codebook_->encode(x.row(i)));
    return det;
  }

  double score(std::span<const double> x) const {
    return std::sqrt(min_adc(codebook_->distance_table(x), codes_.size()));
  }

  std::vector<double> training_scores() const {
    std::vector<double> out(codes_.size());
    for (std::size_t i = 0; i < codes_.size(); ++i)
      out[i] = std::sqrt(min_adc(codebook_->distance_table(codebook_->decode(codes_[i])), i));
    return out;
  }

  std::size_t input_dim() const noexcept { return codebook_->dim(); }
  const std::vector<PqCode>& codes() const noexcept { return codes_; }
  const PqCodebook& codebook() const noexcept { return *codebook_; }

  /// Codes are stored bit-packed: code_length_bits / 8 bytes each.
  void serialize(BlobWriter& w) const {
    w.put_header("NNPQ", 1, 0);
    w.put<std::uint64_t>(codes_.size());
    for (const auto& c : codes_)
      for (auto byte : codebook_->pack(c)) w.put(byte);
  }
  static NnPqDetector deserialize(BlobReader& r, std::shared_ptr<const PqCodebook> codebook) {
    r.expect_header("NNPQ", 1);
    NnPqDetector det;
    det.codebook_ = std::move(codebook);
    const auto count = r.get<std::uint64_t>();
    const std::size_t bytes = (det.codebook_->code_length_bits() + 7) / 8;
    std::vector<std::uint8_t> buf(bytes);
    for (std::uint64_t i = 0; i < count; ++i) {
      for (auto& b : buf) b = r.get<std::uint8_t>();
      det.codes_.push_back(det.codebook_->unpack(buf));
    }
    return det;
  }

 private:
  double min_adc(const std::vector<double>& table, std::size_t skip) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < codes_.size(); ++i)
      if (i != skip) best = std::min(best, codebook_->adc_from_table(table, codes_[i]));
    return best;
  }

  std::shared_ptr<const PqCodebook> codebook_;
  std::vector<PqCode> codes_;
};

/// Gaussian product-kernel density estimate; score = 1 / max(p(x), 1e-300).
class KdeDetector {
 public:
  static constexpr double kDensityFloor = 1e-300;

  static KdeDetector fit(MatrixD x) {
    auto h = scott_bandwidth(x);
    return fit(std::move(x), std::move(h));
  }

  static KdeDetector fit(MatrixD x, std::vector<double> bandwidth) {
    if (x.rows() == 0) fail_validation("kde_fit: empty training set");
    check_dim(bandwidth.size(), x.cols(), "kde_fit bandwidth");
    for (double h : bandwidth)
      if (!(h > 0.0)) fail_validation("kde_fit: bandwidths must be positive");
    KdeDetector det;
    det.train_ = std::move(x);
    det.bandwidth_ = std::move(bandwidth);
    det.log_norm_ = -0.5 * static_cast<double>(det.bandwidth_.size()) * std::log(2.0 * std::numbers::pi);
    for (double h : det.bandwidth_) det.log_norm_ -= std::log(h);
    return det;
  }

  /// log p(x), evaluated with log-sum-exp over kernels.
  double log_density(std::span<const double> x) const {
    check_dim(x.size(), train_.cols(), "kde_score");
    std::vector<double> logs(train_.rows());
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < train_.rows(); ++i) {
      auto row = train_.row(i);
      double q = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double z = (x[j] - row[j]) / bandwidth_[j];
        q += z * z;
      }
      logs[i] = -0.5 * q;
      peak = std::max(peak, logs[i]);
    }
    double acc = 0.0;
    for (double l : logs) acc += std::exp(l - peak);
    return peak + std::log(acc) + log_norm_ - std::log(static_cast<double>(train_.rows()));
  }

  double density(std::span<const double> x) const { return std::exp(log_density(x)); }
  double score(std::span<const double> x) const { return 1.0 / std::max(density(x), kDensityFloor); }

  std::vector<double> training_scores() const {
    std::vector<double> out(train_.rows());
    for (std::size_t i = 0; i < train_.rows(); ++i) out[i] = score(train_.row(i));
    return out;
  }

  std::size_t input_dim() const noexcept { return train_.cols(); }
  const std::vector<double>& bandwidth() const noexcept { return bandwidth_; }

  void serialize(BlobWriter& w) const {
    w.put_header("KDE ", 1, 0);
    w.put_matrix(train_);
    w.put_vector(bandwidth_);
  }
  static KdeDetector deserialize(BlobReader& r) {
    r.expect_header("KDE ", 1);
    auto x = r.get_matrix<double>();
    auto h = r.get_vector<double>();
    return fit(std::move(x), std::move(h));
  }

 private:
  MatrixD train_;
  std::vector<double> bandwidth_;
  double log_norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Detector configuration and the unified model

enum class DetectorKind { nn, ocsvm, kde };
enum class NnMode { exact, pq };
/// How the OC-SVM sigma parameter maps onto the RBF coefficient gamma in
/// exp(-gamma |a-b|^2): `gamma` uses it directly, `width` sets 1/(2 sigma^2).
enum class SigmaConvention { gamma, width };

inline std::string to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::nn: return "nn";
    case DetectorKind::ocsvm: return "ocsvm";
    case DetectorKind::kde: return "kde";
  }
  return "?";
}

inline DetectorKind parse_detector_kind(std::string_view s) {
  if (s == "nn") return DetectorKind::nn;
  if (s == "ocsvm") return DetectorKind::ocsvm;
  if (s == "kde") return DetectorKind::kde;
  fail_validation("unknown detector '", s, "' (expected nn, ocsvm or kde)");
}

struct DetectorConfig {
  DetectorKind kind = DetectorKind::nn;
  NnMode nn_mode = NnMode::pq;
  std::size_t pq_code_bits = 128;
  std::size_t pq_subvectors = 16;
  unsigned pq_iterations = 25;
  bool pq_normalize = false;
  /// PCA target dimension for ocsvm and kde; 0 disables reduction.
  std::size_t pca_dim = 16;
  double ocsvm_sigma = 0.001;
  double ocsvm_nu = 0.1;
  SigmaConvention sigma_convention = SigmaConvention::gamma;
  double ocsvm_tolerance = 1e-4;
  std::size_t ocsvm_max_iterations = 100000;
  std::uint64_t seed = 0;

  double ocsvm_gamma() const {
    if (!(ocsvm_sigma > 0.0)) fail_validation("ocsvm sigma must be positive");
    return sigma_convention == SigmaConvention::gamma ? ocsvm_sigma
                                                      : 1.0 / (2.0 * ocsvm_sigma * ocsvm_sigma);
  }

  bool uses_pq() const noexcept { return kind == DetectorKind::nn && nn_mode == NnMode::pq; }
  bool uses_pca() const noexcept { return kind != DetectorKind::nn && pca_dim > 0; }

  PqConfig pq_config() const {
    if (pq_subvectors == 0 || pq_code_bits % pq_subvectors != 0)
      fail_validation("PQ code length ", pq_code_bits, " bits is not divisible by ", pq_subvectors,
                      " subvectors");
    return {pq_subvectors, static_cast<unsigned>(pq_code_bits / pq_subvectors), pq_iterations, seed,
            pq_normalize};
  }

  OcSvmParams ocsvm_params() const {
    return {ocsvm_nu, ocsvm_gamma(), ocsvm_tolerance, ocsvm_max_iterations};
  }

  /// "none", "pca-16", "pq-128", ...
  std::string preprocessing_descriptor() const {
    if (uses_pq()) return "pq-" + std::to_string(pq_code_bits);
    if (uses_pca()) return "pca-" + std::to_string(pca_dim);
    return "none";
  }
};

/// Shared feature transform applied before a detector: PCA for ocsvm/kde,
/// a PQ codebook for compressed nn, or nothing.
struct Preprocessor {
  std::shared_ptr<const PcaModel> pca;
  std::shared_ptr<const PqCodebook> pq;
};

/// Fits the preprocessing stage a config calls for on training features.
/// The PCA dimension is capped at min(n-1, d).
inline Preprocessor fit_preprocessor(const MatrixD& x, const DetectorConfig& config) {
  Preprocessor pre;
  if (config.uses_pq()) {
    pre.pq = std::make_shared<const PqCodebook>(pq_train(x, config.pq_config()));
  } else if (config.uses_pca()) {
    if (x.rows() < 2) fail_validation("PCA preprocessing needs at least 2 training samples");
    std::size_t k = std::min({config.pca_dim, x.rows() - 1, x.cols()});
    if (k < config.pca_dim) warn("PCA dimension capped at ", k, " (requested ", config.pca_dim, ")");
    pre.pca = std::make_shared<const PcaModel>(pca_fit(x, k));
  }
  return pre;
}

class NoveltyModel {
 public:
  using Payload = std::variant<NnExactDetector, NnPqDetector, OcSvmDetector, KdeDetector>;

  NoveltyModel(DetectorKind kind, std::size_t input_dim, Preprocessor pre, Payload payload)
      : kind_(kind), input_dim_(input_dim), pre_(std::move(pre)), payload_(std::move(payload)) {}

  DetectorKind kind() const noexcept { return kind_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  const Preprocessor& preprocessor() const noexcept { return pre_; }
  const Payload& payload() const noexcept { return payload_; }

  /// Raw feature -> detector input space.
  std::vector<double> prepare(std::span<const double> x) const {
    check_dim(x.size(), input_dim_, "novelty score");
    if (pre_.pca) return pre_.pca->transform(x);
    return {x.begin(), x.end()};
  }

  double score(std::span<const double> x) const {
    const auto y = prepare(x);
    return std::visit([&](const auto& det) { return det.score(y); }, payload_);
  }

  /// Scores of the training samples (leave-one-out for nn).
  std::vector<double> training_scores() const {
    return std::visit(
        [](const auto& det) -> std::vector<double> {
          if constexpr (std::is_same_v<std::decay_t<decltype(det)>, OcSvmDetector>)
            return {};
          else
            return det.training_scores();
        },
        payload_);
  }

  void serialize(BlobWriter& w) const {
    w.put_header("NOVM", 1, 0);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(payload_.index()));
    w.put<std::uint64_t>(input_dim_);
    std::visit([&](const auto& det) { det.serialize(w); }, payload_);
  }

  static NoveltyModel deserialize(BlobReader& r, const Preprocessor& pre) {
    r.expect_header("NOVM", 1);
    const auto which = r.get<std::uint8_t>();
    const auto input_dim = r.get<std::uint64_t>();
    switch (which) {
      case 0: return {DetectorKind::nn, input_dim, pre, NnExactDetector::deserialize(r)};
      case 1:
        if (!pre.pq) fail_validation("PQ detector blob without a PQ codebook");
        return {DetectorKind::nn, input_dim, pre, NnPqDetector::deserialize(r, pre.pq)};
      case 2: return {DetectorKind::ocsvm, input_dim, pre, OcSvmDetector::deserialize(r)};
      case 3: return {DetectorKind::kde, input_dim, pre, KdeDetector::deserialize(r)};
      default: fail_validation("unknown detector payload ", int{which});
    }
  }

 private:
  DetectorKind kind_;
  std::size_t input_dim_;
  Preprocessor pre_;
  Payload payload_;
};

/// Fits a detector on raw features using an already-fitted preprocessor.
inline NoveltyModel fit_novelty(const MatrixD& x, const DetectorConfig& config,
                                const Preprocessor& pre) {
  if (x.rows() == 0) fail_validation("cannot fit a detector on an empty training set");
  MatrixD input = pre.pca ? pre.pca->transform(x) : x;
  switch (config.kind) {
    case DetectorKind::nn:
      if (config.nn_mode == NnMode::pq) {
        if (!pre.pq) fail_validation("compressed nn requires a PQ codebook");
        return {config.kind, x.cols(), pre, NnPqDetector::fit(pre.pq, input)};
      }
      return {config.kind, x.cols(), pre, NnExactDetector::fit(std::move(input))};
    case DetectorKind::ocsvm:
      return {config.kind, x.cols(), pre, OcSvmDetector::fit(input, config.ocsvm_params())};
    case DetectorKind::kde:
      return {config.kind, x.cols(), pre, KdeDetector::fit(std::move(input))};
  }
  fail_validation("unknown detector kind");
}

/// Fits preprocessing and detector together on the same features.
inline NoveltyModel fit_novelty(const MatrixD& x, const DetectorConfig& config) {
  return fit_novelty(x, config, fit_preprocessor(x, config));
}

}  // namespace aed
