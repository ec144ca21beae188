#pragma once

// Spatial bank of novelty detectors: the frame is split into a rows x cols
// grid of equal cells and every region is handled by the detector of the
// cell containing its box centre.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "aed/binary_io.hpp"
#include "aed/common.hpp"
#include "aed/feature_pack.hpp"
#include "aed/novelty.hpp"

namespace aed {

struct GridSpec {
  std::size_t rows = 3;
  std::size_t cols = 4;
  double frame_width = 0;
  double frame_height = 0;

  std::size_t cell_count() const noexcept { return rows * cols; }

  void validate() const {
    if (rows < 1 || cols < 1) fail_validation("grid must have at least one row and column");
    if (!(frame_width > 0.0) || !(frame_height > 0.0))
      fail_validation("grid frame dimensions must be positive");
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Parses "RxC", e.g. "3x4".
inline std::pair<std::size_t, std::size_t> parse_grid(std::string_view text) {
  const auto x = text.find_first_of("xX");
  auto parse = [&](std::string_view part) -> std::size_t {
    std::size_t value = 0;
    if (part.empty()) fail_validation("bad grid '", text, "' (expected RxC)");
    for (char c : part) {
      if (c < '0' || c > '9') fail_validation("bad grid '", text, "' (expected RxC)");
      value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    if (value == 0) fail_validation("grid dimensions must be positive");
    return value;
  };
  if (x == std::string_view::npos) fail_validation("bad grid '", text, "' (expected RxC)");
  return {parse(text.substr(0, x)), parse(text.substr(x + 1))};
}

struct CellIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Cell of a box centre. Boundaries belong to the higher cell; centres on
/// the far frame edge are clamped into the last row/column.
inline CellIndex assign_cell(const GridSpec& spec, const Box& box) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) fail_validation("assign_cell: degenerate box");
  const double cell_w = spec.frame_width / static_cast<double>(spec.cols);
  const double cell_h = spec.frame_height / static_cast<double>(spec.rows);
  auto clamp_index = [](double v, std::size_t n) {
    if (!(v >= 0.0)) return std::size_t{0};
    return std::min(static_cast<std::size_t>(v), n - 1);
  };
  return {clamp_index(std::floor(box.center_y() / cell_h), spec.rows),
          clamp_index(std::floor(box.center_x() / cell_w), spec.cols)};
}

/// Grid over the frame size shared by every video in the pack.
inline GridSpec grid_for_pack(const FeaturePack& pack, std::size_t rows, std::size_t cols) {
  if (pack.manifest.videos.empty()) fail_validation("pack declares no videos");
  const auto& first = pack.manifest.videos.front();
  for (const auto& v : pack.manifest.videos)
    if (v.frame_width != first.frame_width || v.frame_height != first.frame_height)
      fail_validation("videos '", first.video_id, "' and '", v.video_id,
                      "' have different frame sizes; one grid bank needs one frame size");
  GridSpec spec{rows, cols, static_cast<double>(first.frame_width),
                static_cast<double>(first.frame_height)};
  spec.validate();
  return spec;
}

struct BankOptions {
  /// Cells with fewer training regions are left empty.
  std::size_t min_samples = 2;
  /// Report each score as its rank among the cell's training scores.
  bool rank_normalize = false;
};

struct CellScore {
  double score = 0.0;
  bool untrained_cell = false;
};

class GridBank {
 public:
  GridBank(GridSpec spec, DetectorConfig config, BankOptions options, Preprocessor pre,
           std::size_t input_dim)
      : spec_(spec),
        config_(config),
        options_(options),
        pre_(std::move(pre)),
        input_dim_(input_dim),
        cells_(spec.cell_count()),
        calibration_(spec.cell_count()) {}

  const GridSpec& spec() const noexcept { return spec_; }
  const DetectorConfig& config() const noexcept { return config_; }
  const BankOptions& options() const noexcept { return options_; }
  const Preprocessor& preprocessor() const noexcept { return pre_; }
  std::size_t input_dim() const noexcept { return input_dim_; }

  std::size_t cell_slot(CellIndex c) const noexcept { return c.row * spec_.cols + c.col; }
  const std::optional<NoveltyModel>& cell(CellIndex c) const { return cells_.at(cell_slot(c)); }
  std::size_t fitted_cells() const noexcept {
    return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(),
                                                  [](const auto& c) { return c.has_value(); }));
  }

  CellScore score(std::span<const double> feature, const Box& box) const {
    check_dim(feature.size(), input_dim_, "bank_score");
    const std::size_t slot = cell_slot(assign_cell(spec_, box));
    const auto& model = cells_[slot];
    if (!model) return {kUntrainedScore, true};
    const double raw = model->score(feature);
    if (!options_.rank_normalize) return {raw, false};
    const auto& cal = calibration_[slot];
    const auto rank = std::upper_bound(cal.begin(), cal.end(), raw) - cal.begin();
    return {static_cast<double>(rank) / static_cast<double>(cal.size()), false};
  }

  void serialize(BlobWriter& w) const {
    w.put_header("GRID", 1, 0);
    w.put<std::uint64_t>(spec_.rows);
    w.put<std::uint64_t>(spec_.cols);
    w.put(spec_.frame_width);
    w.put(spec_.frame_height);
    w.put<std::uint64_t>(input_dim_);
    w.put<std::uint64_t>(options_.min_samples);
    w.put<std::uint8_t>(options_.rank_normalize ? 1 : 0);
    for (std::size_t s = 0; s < cells_.size(); ++s) {
      w.put<std::uint8_t>(cells_[s] ? 1 : 0);
      if (cells_[s]) {
        cells_[s]->serialize(w);
        w.put_vector(calibration_[s]);
      }
    }
  }

  static GridBank deserialize(BlobReader& r, const DetectorConfig& config, const Preprocessor& pre) {
    r.expect_header("GRID", 1);
    GridSpec spec;
    spec.rows = r.get<std::uint64_t>();
    spec.cols = r.get<std::uint64_t>();
    spec.frame_width = r.get<double>();
    spec.frame_height = r.get<double>();
    spec.validate();
    const auto input_dim = r.get<std::uint64_t>();
    BankOptions options;
    options.min_samples = r.get<std::uint64_t>();
    options.rank_normalize = r.get<std::uint8_t>() != 0;
    GridBank bank(spec, config, options, pre, input_dim);
    for (std::size_t s = 0; s < bank.cells_.size(); ++s) {
      if (r.get<std::uint8_t>() == 0) continue;
      bank.cells_[s] = NoveltyModel::deserialize(r, pre);
      bank.calibration_[s] = r.get_vector<double>();
    }
    return bank;
  }

  friend GridBank bank_fit(const GridSpec&, const MatrixD&, std::span<const Box>,
                           const DetectorConfig&, const BankOptions&);

 private:
  GridSpec spec_;
  DetectorConfig config_;
  BankOptions options_;
  Preprocessor pre_;
  std::size_t input_dim_;
  std::vector<std::optional<NoveltyModel>> cells_;
  std::vector<std::vector<double>> calibration_;  // sorted training scores per cell
};

/// Region indices routed to each cell slot (row-major).
inline std::vector<std::vector<std::size_t>> route_regions(const GridSpec& spec,
                                                           std::span<const Box> boxes) {
  std::vector<std::vector<std::size_t>> routed(spec.cell_count());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto c = assign_cell(spec, boxes[i]);
    routed[c.row * spec.cols + c.col].push_back(i);
  }
  return routed;
}

/// Fits the shared preprocessor on all training features, then one detector
/// per cell on the features routed to it.
inline GridBank bank_fit(const GridSpec& spec, const MatrixD& features, std::span<const Box> boxes,
                         const DetectorConfig& config, const BankOptions& options = {}) {
  spec.validate();
  if (features.rows() == 0) fail_validation("bank_fit: no training records");
  check_dim(boxes.size(), features.rows(), "bank_fit boxes");
  GridBank bank(spec, config, options, fit_preprocessor(features, config), features.cols());
  const auto routed = route_regions(spec, boxes);
  const std::size_t min_samples = std::max<std::size_t>(options.min_samples, 1);
  for (std::size_t s = 0; s < routed.size(); ++s) {
    if (routed[s].size() < min_samples) continue;
    const auto subset = select_rows(features, routed[s]);
    auto model = fit_novelty(subset, config, bank.pre_);
    if (options.rank_normalize) {
      std::vector<double> cal;
      if (config.kind == DetectorKind::nn) {
        cal = model.training_scores();
      } else {
        for (std::size_t i = 0; i < subset.rows(); ++i) cal.push_back(model.score(subset.row(i)));
      }
      std::sort(cal.begin(), cal.end());
      bank.calibration_[s] = std::move(cal);
    }
    bank.cells_[s] = std::move(model);
  }
  return bank;
}

inline std::vector<Box> pack_boxes(const FeaturePack& pack) {
  std::vector<Box> boxes;
  boxes.reserve(pack.size());
  for (const auto& r : pack.records) boxes.push_back(r.box);
  return boxes;
}

inline GridBank bank_fit(const GridSpec& spec, const FeaturePack& pack, const DetectorConfig& config,
                         const BankOptions& options = {}) {
  return bank_fit(spec, pack.feature_matrix(), pack_boxes(pack), config, options);
}

inline CellScore bank_score(const GridBank& bank, std::span<const double> feature, const Box& box) {
  return bank.score(feature, box);
}

}  // namespace aed
