#pragma once

// Metrics and protocols: ROC/AUC/EER, frame- and pixel-level criteria,
// average precision, the unseen-category split and recounting evaluation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aed/common.hpp"
#include "aed/feature_pack.hpp"
#include "aed/recounting.hpp"
#include "aed/rng.hpp"

namespace aed {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// ROC

struct ScoredLabel {
  double score = 0.0;
  bool positive = false;
};

struct RocPoint {
  double threshold = 0.0;  // score >= threshold is flagged
  double tpr = 0.0;
  double fpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // descending threshold, from (0,0) to (1,1)
  double auc = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  double eer_fpr = 0.0;  // operating point of the EER estimate
  double eer_fnr = 0.0;
};

inline double trapezoid_auc(const std::vector<RocPoint>& points) {
  double auc = 0.0;
  for (std::size_t k = 1; k < points.size(); ++k)
    auc += (points[k].fpr - points[k - 1].fpr) * (points[k].tpr + points[k - 1].tpr) / 2.0;
  return auc;
}

inline RocCurve roc(std::span<const ScoredLabel> items) {
  std::size_t pos = 0;
  for (const auto& it : items) {
    if (std::isnan(it.score)) fail_validation("roc: NaN score");
    pos += it.positive ? 1 : 0;
  }
  const std::size_t neg = items.size() - pos;
  if (pos == 0 || neg == 0) fail_validation("roc: need at least one positive and one negative");

  std::vector<ScoredLabel> sorted(items.begin(), items.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });

  RocCurve curve;
  curve.points.push_back({kInf, 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == t; ++i) (sorted[i].positive ? tp : fp) += 1;
    // +inf scores are already flagged at the +inf threshold
    if (t == kInf) {
      curve.points.back() = {kInf, static_cast<double>(tp) / pos, static_cast<double>(fp) / neg};
      continue;
    }
    curve.points.push_back({t, static_cast<double>(tp) / pos, static_cast<double>(fp) / neg});
  }
  if (curve.points.front().tpr != 0.0 || curve.points.front().fpr != 0.0)
    curve.points.insert(curve.points.begin(), {kInf, 0.0, 0.0});
  curve.auc = trapezoid_auc(curve.points);

  // EER: where fpr = 1 - tpr, interpolated on the segment where
  // fpr + tpr - 1 changes sign.
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const auto& a = curve.points[k - 1];
    const auto& b = curve.points[k];
    const double fa = a.fpr + a.tpr - 1.0;
    const double fb = b.fpr + b.tpr - 1.0;
    if (fa <= 0.0 && fb >= 0.0) {
      const double lambda = fb == fa ? 0.0 : -fa / (fb - fa);
      const double fpr = a.fpr + lambda * (b.fpr - a.fpr);
      const double fnr = 1.0 - (a.tpr + lambda * (b.tpr - a.tpr));
      curve.eer = (fpr + fnr) / 2.0;
      curve.eer_fpr = fpr;
      curve.eer_fnr = fnr;
      if (std::isfinite(a.threshold) && std::isfinite(b.threshold))
        curve.eer_threshold = a.threshold + lambda * (b.threshold - a.threshold);
      else
        curve.eer_threshold = std::isfinite(b.threshold) ? b.threshold : a.threshold;
      break;
    }
  }
  return curve;
}

inline RocCurve roc(const std::vector<ScoredLabel>& items) { return roc(std::span<const ScoredLabel>(items)); }

// ---------------------------------------------------------------------------
// Detections

struct Detection {
  std::size_t record = 0;
  std::string video_id;
  std::uint64_t frame_index = 0;
  Box box;
  double score = 0.0;
  bool untrained_cell = false;
  std::optional<bool> detected;  // set when a threshold was given
};

inline nlohmann::json to_json(const Detection& d) {
  nlohmann::json j = {{"record", d.record},
                      {"video_id", d.video_id},
                      {"frame_index", d.frame_index},
                      {"box", {d.box.x, d.box.y, d.box.w, d.box.h}},
                      {"score", d.score}};
  if (d.untrained_cell) j["untrained_cell"] = true;
  if (d.detected) j["detected"] = *d.detected;
  return j;
}

inline Detection detection_from_json(const nlohmann::json& j) {
  Detection d;
  d.record = j.at("record").get<std::size_t>();
  d.video_id = j.at("video_id").get<std::string>();
  d.frame_index = j.at("frame_index").get<std::uint64_t>();
  const auto& b = j.at("box");
  if (!b.is_array() || b.size() != 4) fail_validation("detection box must be [x, y, w, h]");
  d.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  d.score = j.at("score").get<double>();
  d.untrained_cell = j.value("untrained_cell", false);
  if (j.contains("detected")) d.detected = j.at("detected").get<bool>();
  return d;
}

using FrameKey = std::pair<std::string, std::uint64_t>;

enum class FrameAggregation { max, mean };

inline FrameAggregation parse_aggregation(std::string_view s) {
  if (s == "max") return FrameAggregation::max;
  if (s == "mean") return FrameAggregation::mean;
  fail_validation("unknown frame aggregation '", s, "' (expected max or mean)");
}

struct FrameScore {
  FrameKey frame;
  double score = -kInf;
};

/// One score per listed frame: max (or mean) over its regions; frames with
/// no detections get -inf.
inline std::vector<FrameScore> frame_level_scores(std::span<const Detection> detections,
                                                  std::span<const FrameKey> frames,
                                                  FrameAggregation agg = FrameAggregation::max) {
  std::map<FrameKey, std::pair<double, std::size_t>> acc;
  for (const auto& d : detections) {
    auto [it, fresh] = acc.try_emplace({d.video_id, d.frame_index}, d.score, 1);
    if (fresh) continue;
    if (agg == FrameAggregation::max)
      it->second.first = std::max(it->second.first, d.score);
    else
      it->second.first += d.score;
    ++it->second.second;
  }
  std::vector<FrameScore> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    FrameScore fs{f, -kInf};
    if (auto it = acc.find(f); it != acc.end())
      fs.score = agg == FrameAggregation::max ? it->second.first
                                              : it->second.first / static_cast<double>(it->second.second);
    out.push_back(std::move(fs));
  }
  return out;
}

inline std::vector<FrameKey> frame_keys(const GroundTruth& gt) {
  std::vector<FrameKey> keys;
  keys.reserve(gt.frames.size());
  for (const auto& f : gt.frames) keys.emplace_back(f.video_id, f.frame_index);
  return keys;
}

inline RocCurve frame_level_roc(std::span<const Detection> detections, const GroundTruth& gt,
                                FrameAggregation agg = FrameAggregation::max) {
  if (gt.frames.empty()) fail_validation("frame-level evaluation needs frame labels");
  const auto keys = frame_keys(gt);
  const auto scores = frame_level_scores(detections, keys, agg);
  std::vector<ScoredLabel> items;
  for (std::size_t i = 0; i < scores.size(); ++i) items.push_back({scores[i].score, gt.frames[i].abnormal});
  return roc(items);
}

// ---------------------------------------------------------------------------
// Pixel level

/// Pixels (i, j) whose centre (i + 0.5, j + 0.5) lies inside any box.
inline std::vector<std::uint8_t> rasterize_boxes(int width, int height, std::span<const Box> boxes) {
  std::vector<std::uint8_t> covered(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
  for (const auto& b : boxes) {
    const int x0 = std::max(0, static_cast<int>(std::ceil(b.x - 0.5)));
    const int x1 = std::min(width, static_cast<int>(std::ceil(b.x + b.w - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(b.y - 0.5)));
    const int y1 = std::min(height, static_cast<int>(std::ceil(b.y + b.h - 0.5)));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) covered[static_cast<std::size_t>(y) * width + x] = 1;
  }
  return covered;
}

struct Coverage {
  std::size_t covered = 0;  // ground-truth pixels under a box
  std::size_t total = 0;    // ground-truth pixels
  double fraction() const { return total == 0 ? 0.0 : static_cast<double>(covered) / total; }
  /// At least 40% of the abnormal pixels covered (exact integer test).
  bool hit() const { return total > 0 && covered * 10 >= total * 4; }
};

inline Coverage mask_coverage(const RleMask& mask, std::span<const Box> boxes) {
  const auto gt = mask.decode();
  const auto cov = rasterize_boxes(mask.width, mask.height, boxes);
  Coverage c;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt[i]) continue;
    ++c.total;
    c.covered += cov[i];
  }
  return c;
}

struct FrameOutcome {
  FrameKey frame;
  bool abnormal = false;
  bool flagged = false;  // abnormal: detected under the 40% rule; normal: false positive
  double coverage = 0.0;
};

namespace detail {

inline std::map<FrameKey, std::vector<const Detection*>> group_by_frame(std::span<const Detection> detections) {
  std::map<FrameKey, std::vector<const Detection*>> by_frame;
  for (const auto& d : detections) by_frame[{d.video_id, d.frame_index}].push_back(&d);
  return by_frame;
}

inline const RleMask& require_mask(const FrameLabel& f) {
  if (!f.mask)
    fail_validation("pixel-level evaluation: abnormal frame ", f.video_id, "#", f.frame_index,
                    " has no mask");
  return *f.mask;
}

}  // namespace detail

inline std::vector<FrameOutcome> pixel_level_outcomes(std::span<const Detection> detections,
                                                      const GroundTruth& gt, double threshold) {
  const auto by_frame = detail::group_by_frame(detections);
  std::vector<FrameOutcome> out;
  for (const auto& f : gt.frames) {
    FrameOutcome o{{f.video_id, f.frame_index}, f.abnormal, false, 0.0};
    std::vector<Box> boxes;
    if (auto it = by_frame.find(o.frame); it != by_frame.end())
      for (const auto* d : it->second)
        if (d->score >= threshold) boxes.push_back(d->box);
    if (f.abnormal) {
      const auto c = mask_coverage(detail::require_mask(f), boxes);
      o.coverage = c.fraction();
      o.flagged = c.hit();
    } else {
      o.flagged = !boxes.empty();
    }
    out.push_back(std::move(o));
  }
  return out;
}

/// Highest threshold at which each frame is flagged under the pixel-level
/// rule (-inf if never), so that the ROC sweep reduces to roc().
inline std::vector<ScoredLabel> pixel_level_activations(std::span<const Detection> detections,
                                                        const GroundTruth& gt) {
  const auto by_frame = detail::group_by_frame(detections);
  std::vector<ScoredLabel> items;
  for (const auto& f : gt.frames) {
    double activation = -kInf;
    auto it = by_frame.find({f.video_id, f.frame_index});
    if (it != by_frame.end()) {
      auto dets = it->second;
      std::sort(dets.begin(), dets.end(), [](const Detection* a, const Detection* b) { return a->score > b->score; });
      if (!f.abnormal) {
        activation = dets.front()->score;
      } else {
        const auto& mask = detail::require_mask(f);
        const auto gt_bits = mask.decode();
        std::size_t total = 0;
        for (auto b : gt_bits) total += b;
        std::vector<std::uint8_t> counted(gt_bits.size(), 0);
        std::size_t covered = 0;
        for (std::size_t i = 0; i < dets.size();) {
          const double t = dets[i]->score;
          for (; i < dets.size() && dets[i]->score == t; ++i) {
            const Box one[] = {dets[i]->box};
            const auto cov = rasterize_boxes(mask.width, mask.height, one);
            for (std::size_t p = 0; p < cov.size(); ++p)
              if (cov[p] && gt_bits[p] && !counted[p]) {
                counted[p] = 1;
                ++covered;
              }
          }
          if (total > 0 && covered * 10 >= total * 4) {
            activation = t;
            break;
          }
        }
      }
    } else if (f.abnormal) {
      detail::require_mask(f);
    }
    items.push_back({activation, f.abnormal});
  }
  return items;
}

/// Pixel-level ROC. At the lowest (-inf) threshold every frame is counted
/// as flagged, closing the curve at (1,1).
inline RocCurve pixel_level_roc(std::span<const Detection> detections, const GroundTruth& gt) {
  if (gt.frames.empty()) fail_validation("pixel-level evaluation needs frame labels");
  return roc(pixel_level_activations(detections, gt));
}

// ---------------------------------------------------------------------------
// Average precision

/// All-points interpolated AP over a ranking (true = positive), best first.
inline double average_precision(const std::vector<bool>& ranked) {
  const auto positives = static_cast<std::size_t>(std::count(ranked.begin(), ranked.end(), true));
  if (positives == 0) fail_validation("average_precision: no positives");
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    tp += ranked[k] ? 1 : 0;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

/// AP of items ranked by descending score (ties keep input order).
inline double average_precision(std::span<const ScoredLabel> items) {
  std::vector<ScoredLabel> sorted(items.begin(), items.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  std::vector<bool> ranked;
  for (const auto& s : sorted) ranked.push_back(s.positive);
  return average_precision(ranked);
}

inline double mean_average_precision(std::span<const double> aps) {
  if (aps.empty()) fail_validation("mean_average_precision: no splits");
  double acc = 0.0;
  for (double a : aps) acc += a;
  return acc / static_cast<double>(aps.size());
}

// ---------------------------------------------------------------------------
// Unseen-category split

struct SplitSpec {
  std::string task;
  std::uint64_t seed = 0;
  std::size_t repeat = 0;
};

struct SplitResult {
  FeaturePack train;
  FeaturePack test;
  std::vector<std::string> unseen;
  std::size_t train_images = 0;
  std::size_t test_images = 0;
  bool balanced = true;
};

/// "Around n/4", at least one.
inline std::size_t unseen_count(std::size_t n_categories) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n_categories) / 4.0)));
}

inline std::vector<std::string> draw_unseen(const ConceptTask& task, std::uint64_t seed, std::size_t repeat,
                                            std::size_t attempt = 0) {
  std::vector<std::size_t> order(task.score_dim());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(derive_seed(seed, repeat), attempt));
  rng.shuffle(order);
  order.resize(unseen_count(task.score_dim()));
  std::sort(order.begin(), order.end());
  std::vector<std::string> names;
  for (auto i : order) names.push_back(task.categories[i]);
  return names;
}

namespace detail {

inline const std::vector<std::string>* region_categories(const FeaturePack& pack, std::size_t record,
                                                         const std::string& task) {
  const auto* label = pack.labels->for_record(record);
  if (!label) return nullptr;
  auto it = label->categories.find(task);
  return it == label->categories.end() ? nullptr : &it->second;
}

}  // namespace detail

/// Split with a fixed unseen set: images (video, frame) with any unseen
/// annotation go to test; seen-only images are shuffled and moved to test
/// until the two sides have equal image counts (+-1).
inline SplitResult split_with_unseen(const FeaturePack& pack, const std::string& task,
                                     const std::vector<std::string>& unseen, std::uint64_t seed) {
  if (!pack.labels) fail_validation("split_unseen: pack has no labels");
  if (!pack.manifest.task_index(task)) fail_validation("split_unseen: unknown task '", task, "'");
  const std::set<std::string> unseen_set(unseen.begin(), unseen.end());

  std::map<FrameKey, std::vector<std::size_t>> images;
  std::map<FrameKey, bool> has_unseen;
  std::map<std::string, std::size_t> images_with;
  for (std::size_t i = 0; i < pack.size(); ++i) {
    const FrameKey key{pack.records[i].video_id, pack.records[i].frame_index};
    images[key].push_back(i);
    has_unseen.try_emplace(key, false);
    if (const auto* cats = detail::region_categories(pack, i, task))
      for (const auto& c : *cats)
        if (unseen_set.count(c)) has_unseen[key] = true;
  }
  for (const auto& [key, recs] : images) {
    std::set<std::string> present;
    for (auto i : recs)
      if (const auto* cats = detail::region_categories(pack, i, task)) present.insert(cats->begin(), cats->end());
    for (const auto& c : present) ++images_with[c];
  }
  for (const auto& c : unseen)
    if (images_with[c] == images.size() && !images.empty())
      fail_validation("split_unseen: category '", c, "' appears in every image; no training images remain");

  std::vector<FrameKey> test_keys, seen_keys;
  for (const auto& [key, flag] : has_unseen) (flag ? test_keys : seen_keys).push_back(key);
  if (seen_keys.empty()) fail_validation("split_unseen: every image contains an unseen category");

  const std::size_t n_images = images.size();
  const std::size_t target_test = (n_images + 1) / 2;
  SplitResult result;
  result.unseen = unseen;
  Rng rng(derive_seed(seed, 0x5b1175));
  rng.shuffle(seen_keys);
  std::size_t moved = 0;
  while (test_keys.size() < target_test && moved < seen_keys.size() - 1) test_keys.push_back(seen_keys[moved++]);
  seen_keys.erase(seen_keys.begin(), seen_keys.begin() + static_cast<std::ptrdiff_t>(moved));
  result.balanced = test_keys.size() <= target_test;
  if (!result.balanced)
    warn("split_unseen: ", test_keys.size(), " of ", n_images,
         " images contain unseen categories; test and train cannot be balanced");

  std::sort(test_keys.begin(), test_keys.end());
  std::sort(seen_keys.begin(), seen_keys.end());
  auto gather = [&](const std::vector<FrameKey>& keys) {
    std::vector<std::size_t> recs;
    for (const auto& k : keys) recs.insert(recs.end(), images[k].begin(), images[k].end());
    std::sort(recs.begin(), recs.end());
    return recs;
  };
  const auto train_recs = gather(seen_keys);
  const auto test_recs = gather(test_keys);
  result.train = subset_pack(pack, train_recs);
  result.test = subset_pack(pack, test_recs);
  auto mark = [&](FeaturePack& p) {
    for (auto& r : p.labels->regions) {
      r.abnormal = false;
      auto it = r.categories.find(task);
      if (it != r.categories.end())
        for (const auto& c : it->second)
          if (unseen_set.count(c)) r.abnormal = true;
    }
    std::set<FrameKey> abnormal_frames;
    for (const auto& r : p.labels->regions)
      if (r.abnormal) abnormal_frames.insert({p.records[r.record].video_id, p.records[r.record].frame_index});
    for (auto& f : p.labels->frames) f.abnormal = abnormal_frames.count({f.video_id, f.frame_index}) > 0;
  };
  mark(result.train);
  mark(result.test);
  result.train_images = seen_keys.size();
  result.test_images = test_keys.size();
  return result;
}

inline SplitResult split_unseen(const FeaturePack& pack, const SplitSpec& spec) {
  const auto t = pack.manifest.task_index(spec.task);
  if (!t) fail_validation("split_unseen: unknown task '", spec.task, "'");
  return split_with_unseen(pack, spec.task, draw_unseen(pack.manifest.tasks[*t], spec.seed, spec.repeat),
                           derive_seed(spec.seed, spec.repeat));
}

/// `repeats` splits with pairwise distinct unseen sets where possible.
inline std::vector<SplitResult> split_unseen_repeats(const FeaturePack& pack, const std::string& task,
                                                     std::uint64_t seed, std::size_t repeats = 5) {
  const auto t = pack.manifest.task_index(task);
  if (!t) fail_validation("split_unseen: unknown task '", task, "'");
  const auto& concept_task = pack.manifest.tasks[*t];
  std::set<std::vector<std::string>> used;
  std::vector<SplitResult> out;
  for (std::size_t r = 0; r < repeats; ++r) {
    auto unseen = draw_unseen(concept_task, seed, r);
    for (std::size_t attempt = 1; used.count(unseen) && attempt < 1000; ++attempt)
      unseen = draw_unseen(concept_task, seed, r, attempt);
    if (used.count(unseen)) warn("split_unseen: repeat ", r, " reuses an earlier unseen set");
    used.insert(unseen);
    out.push_back(split_with_unseen(pack, task, unseen, derive_seed(seed, r)));
  }
  return out;
}

/// Number of region annotations in `pack` naming one of `unseen`.
inline std::size_t unseen_leakage(const FeaturePack& pack, const std::string& task,
                                  const std::vector<std::string>& unseen) {
  if (!pack.labels) return 0;
  const std::set<std::string> unseen_set(unseen.begin(), unseen.end());
  std::size_t leaks = 0;
  for (const auto& r : pack.labels->regions)
    if (auto it = r.categories.find(task); it != r.categories.end())
      for (const auto& c : it->second) leaks += unseen_set.count(c);
  return leaks;
}

// ---------------------------------------------------------------------------
// Recounting evaluation

enum class AgreementMode {
  intersect,  // some predicted unseen category is an annotated unseen category
  exact,      // predicted unseen set equals the annotated unseen set
};

inline AgreementMode parse_agreement(std::string_view s) {
  if (s == "intersect") return AgreementMode::intersect;
  if (s == "exact") return AgreementMode::exact;
  fail_validation("unknown agreement mode '", s, "' (expected intersect or exact)");
}

struct RecountEvalItem {
  /// Categories with classification score >= 0.1 and their concept anomaly
  /// scores; keys are "task/category".
  std::vector<std::pair<std::string, double>> candidates;
  std::set<std::string> gt_unseen;  // annotated unseen categories
  bool positive = false;
};

struct RecountEvalResult {
  std::vector<RocPoint> points;  // descending threshold, from (0,0)
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// TP: positive region whose predicted unseen categories (anomaly >= t)
/// agree with the annotation. FP: negative region predicting any unseen
/// category. The curve holds the achieved points only.
inline RecountEvalResult recounting_eval(std::span<const RecountEvalItem> items,
                                         AgreementMode mode = AgreementMode::intersect,
                                         std::optional<std::vector<double>> thresholds = std::nullopt) {
  RecountEvalResult res;
  for (const auto& it : items) (it.positive ? res.positives : res.negatives) += 1;
  if (res.positives == 0 || res.negatives == 0)
    fail_validation("recounting_eval: need at least one positive and one negative region");

  std::vector<double> ts;
  if (thresholds) {
    ts = *thresholds;
  } else {
    for (const auto& it : items)
      for (const auto& c : it.candidates) ts.push_back(c.second);
  }
  std::sort(ts.begin(), ts.end(), std::greater<>());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

  auto flagged = [&](const RecountEvalItem& it, double t) {
    if (!it.positive) {
      for (const auto& c : it.candidates)
        if (c.second >= t) return true;
      return false;
    }
    std::set<std::string> predicted;
    for (const auto& c : it.candidates)
      if (c.second >= t) predicted.insert(c.first);
    if (mode == AgreementMode::exact) return !predicted.empty() && predicted == it.gt_unseen;
    for (const auto& p : predicted)
      if (it.gt_unseen.count(p)) return true;
    return false;
  };

  res.points.push_back({kInf, 0.0, 0.0});
  for (double t : ts) {
    std::size_t tp = 0, fp = 0;
    for (const auto& it : items)
      if (flagged(it, t)) (it.positive ? tp : fp) += 1;
    res.points.push_back({t, static_cast<double>(tp) / res.positives, static_cast<double>(fp) / res.negatives});
  }
  res.auc = trapezoid_auc(res.points);
  return res;
}

inline RecountEvalResult recounting_eval(const std::vector<RecountEvalItem>& items,
                                         AgreementMode mode = AgreementMode::intersect,
                                         std::optional<std::vector<double>> thresholds = std::nullopt) {
  return recounting_eval(std::span<const RecountEvalItem>(items), mode, std::move(thresholds));
}

inline std::string concept_key(std::string_view task, std::string_view category) {
  return std::string(task) + "/" + std::string(category);
}

/// Evaluation items from multi-mode recount records of a labelled pack.
/// `unseen` maps task name to its unseen categories; a region is positive
/// when its label marks it abnormal.
inline std::vector<RecountEvalItem> recount_eval_items(
    const FeaturePack& pack, std::span<const RecountRecord> records,
    const std::map<std::string, std::vector<std::string>>& unseen) {
  if (!pack.labels) fail_validation("recounting evaluation needs region labels");
  std::vector<RecountEvalItem> items;
  for (const auto& rec : records) {
    if (rec.record >= pack.size()) fail_validation("recount record ", rec.record, " is not in the pack");
    RecountEvalItem item;
    for (const auto& t : rec.tasks)
      for (const auto& c : t.candidates) item.candidates.emplace_back(concept_key(t.task, c.name), c.anomaly_score);
    if (const auto* label = pack.labels->for_record(rec.record)) {
      item.positive = label->abnormal;
      for (const auto& [task, cats] : label->categories) {
        auto u = unseen.find(task);
        if (u == unseen.end()) continue;
        for (const auto& c : cats)
          if (std::find(u->second.begin(), u->second.end(), c) != u->second.end())
            item.gt_unseen.insert(concept_key(task, c));
      }
    }
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace aed
