#pragma once

// Abnormal event recounting. Each concept task (object, action, attribute,
// ...) predicts a category from the region's classification scores, and
// every category carries a 1-D KDE of its classification scores over the
// training environment; the reciprocal density at the observed score tells
// how unusual that concept is here.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aed/binary_io.hpp"
#include "aed/common.hpp"
#include "aed/feature_pack.hpp"

namespace aed {

/// Categories scoring below this are never predicted.
inline constexpr double kMinClassificationScore = 0.1;
inline constexpr double kConceptDensityFloor = 1e-12;

/// 1-D Gaussian KDE with Scott bandwidth h = s n^(-1/5).
class Kde1d {
 public:
  Kde1d() = default;

  static Kde1d fit(std::vector<double> samples) {
    Kde1d k;
    k.samples_ = std::move(samples);
    double sd = 0.0;
    const std::size_t n = k.samples_.size();
    if (n >= 2) {
      double mean = 0.0;
      for (double s : k.samples_) mean += s;
      mean /= static_cast<double>(n);
      double ss = 0.0;
      for (double s : k.samples_) ss += (s - mean) * (s - mean);
      sd = std::sqrt(ss / static_cast<double>(n - 1));
    }
    const double h = n >= 2 ? sd * std::pow(static_cast<double>(n), -0.2) : 0.0;
    k.bandwidth_ = std::max(h, 1e-6 * std::max(1.0, sd));
    return k;
  }

  static Kde1d with_bandwidth(std::vector<double> samples, double bandwidth) {
    if (!(bandwidth > 0.0)) fail_validation("KDE bandwidth must be positive");
    Kde1d k;
    k.samples_ = std::move(samples);
    k.bandwidth_ = bandwidth;
    return k;
  }

  /// Density at `s`; 0 when fitted on no samples.
  double density(double s) const {
    if (samples_.empty()) return 0.0;
    const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * bandwidth_);
    double acc = 0.0;
    for (double v : samples_) {
      const double z = (s - v) / bandwidth_;
      acc += std::exp(-0.5 * z * z);
    }
    return acc * norm / static_cast<double>(samples_.size());
  }

  double bandwidth() const noexcept { return bandwidth_; }
  const std::vector<double>& samples() const noexcept { return samples_; }

 private:
  std::vector<double> samples_;
  double bandwidth_ = 1e-6;
};

struct RecountModel {
  std::vector<ConceptTask> tasks;
  std::vector<std::vector<Kde1d>> densities;  // [task][category]

  std::size_t task_index(std::string_view name) const {
    for (std::size_t t = 0; t < tasks.size(); ++t)
      if (tasks[t].name == name) return t;
    fail_validation("unknown concept task '", name, "'");
  }
  const Kde1d& density(std::size_t task, std::size_t category) const {
    if (task >= densities.size() || category >= densities[task].size())
      fail_validation("unknown category ", category, " in task ", task);
    return densities[task][category];
  }
};

/// One 1-D KDE per (task, category) over all training regions' scores.
inline RecountModel recount_fit(const FeaturePack& train) {
  RecountModel model;
  model.tasks = train.manifest.tasks;
  if (train.size() < 2)
    warn("recount_fit: ", train.size(), " training regions; densities use the bandwidth floor");
  for (std::size_t t = 0; t < model.tasks.size(); ++t) {
    std::vector<Kde1d> per_task;
    for (std::size_t c = 0; c < model.tasks[t].score_dim(); ++c) {
      std::vector<double> samples(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) samples[i] = train.task_scores(t, i)[c];
      per_task.push_back(Kde1d::fit(std::move(samples)));
    }
    model.densities.push_back(std::move(per_task));
  }
  return model;
}

/// Highest-scoring category (lowest index on ties), or none when every
/// score is below 0.1.
template <class T>
std::optional<std::size_t> predict_category(std::span<const T> scores) {
  if (scores.empty()) fail_validation("predict_categories: empty task");
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  if (static_cast<double>(scores[best]) < kMinClassificationScore) return std::nullopt;
  return best;
}

/// Every category scoring at least 0.1, in category order.
template <class T>
std::vector<std::size_t> candidate_categories(std::span<const T> scores) {
  if (scores.empty()) fail_validation("predict_categories: empty task");
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < scores.size(); ++c)
    if (static_cast<double>(scores[c]) >= kMinClassificationScore) out.push_back(c);
  return out;
}

inline double concept_anomaly(const RecountModel& model, std::size_t task, std::size_t category,
                              double classification_score) {
  return 1.0 / std::max(model.density(task, category).density(classification_score),
                        kConceptDensityFloor);
}

inline double concept_anomaly(const RecountModel& model, std::string_view task,
                              std::string_view category, double classification_score) {
  const auto t = model.task_index(task);
  const auto c = model.tasks[t].index_of(category);
  if (!c) fail_validation("unknown category '", category, "' in task '", task, "'");
  return concept_anomaly(model, t, *c, classification_score);
}

enum class RecountMode {
  single,  // argmax category per task (display)
  multi,   // every category with score >= 0.1 (evaluation)
};

struct ConceptScore {
  std::size_t category = 0;
  std::string name;
  double cls_score = 0.0;
  double anomaly_score = 0.0;
};

struct TaskRecount {
  std::string task;
  std::optional<ConceptScore> predicted;
  double max_cls_score = 0.0;
  std::vector<ConceptScore> candidates;  // multi mode only
};

struct RecountRecord {
  std::size_t record = 0;
  std::string video_id;
  std::uint64_t frame_index = 0;
  Box box;
  double detection_score = 0.0;
  bool untrained_cell = false;
  std::vector<TaskRecount> tasks;
};

/// Predicts categories and concept anomaly scores for one region given its
/// per-task classification score vectors.
inline std::vector<TaskRecount> recount_event(const RecountModel& model,
                                              std::span<const std::vector<double>> task_scores,
                                              RecountMode mode = RecountMode::single) {
  check_dim(task_scores.size(), model.tasks.size(), "recount_event tasks");
  std::vector<TaskRecount> out;
  for (std::size_t t = 0; t < model.tasks.size(); ++t) {
    const auto& scores = task_scores[t];
    check_dim(scores.size(), model.tasks[t].score_dim(), "recount_event scores");
    TaskRecount tr;
    tr.task = model.tasks[t].name;
    std::span<const double> view(scores);
    tr.max_cls_score = *std::max_element(scores.begin(), scores.end());
    auto make = [&](std::size_t c) {
      return ConceptScore{c, model.tasks[t].categories[c], scores[c],
                          concept_anomaly(model, t, c, scores[c])};
    };
    if (auto best = predict_category(view)) tr.predicted = make(*best);
    if (mode == RecountMode::multi)
      for (auto c : candidate_categories(view)) tr.candidates.push_back(make(c));
    out.push_back(std::move(tr));
  }
  return out;
}

/// Recounts record `i` of a pack.
inline RecountRecord recount_region(const RecountModel& model, const FeaturePack& pack, std::size_t i,
                                    RecountMode mode = RecountMode::single) {
  std::vector<std::vector<double>> scores;
  for (std::size_t t = 0; t < pack.manifest.tasks.size(); ++t) {
    auto row = pack.task_scores(t, i);
    scores.emplace_back(row.begin(), row.end());
  }
  const auto& r = pack.records[i];
  RecountRecord rec;
  rec.record = i;
  rec.video_id = r.video_id;
  rec.frame_index = r.frame_index;
  rec.box = r.box;
  rec.tasks = recount_event(model, scores, mode);
  return rec;
}

inline nlohmann::json to_json(const ConceptScore& c) {
  return {{"category", c.name}, {"cls_score", c.cls_score}, {"anomaly_score", c.anomaly_score}};
}

inline nlohmann::json to_json(const RecountRecord& r) {
  nlohmann::json tasks = nlohmann::json::object();
  for (const auto& t : r.tasks) {
    nlohmann::json j;
    if (t.predicted) {
      j = to_json(*t.predicted);
    } else {
      j = {{"category", nullptr}, {"cls_score", t.max_cls_score}, {"anomaly_score", nullptr}};
    }
    if (!t.candidates.empty() || !t.predicted) {
      j["candidates"] = nlohmann::json::array();
      for (const auto& c : t.candidates) j["candidates"].push_back(to_json(c));
    }
    tasks[t.task] = std::move(j);
  }
  nlohmann::json j = {{"record", r.record},
                      {"video_id", r.video_id},
                      {"frame_index", r.frame_index},
                      {"box", {r.box.x, r.box.y, r.box.w, r.box.h}},
                      {"detection_score", r.detection_score},
                      {"tasks", std::move(tasks)}};
  if (r.untrained_cell) j["untrained_cell"] = true;
  return j;
}

inline RecountRecord recount_record_from_json(const nlohmann::json& j, const RecountModel* model = nullptr) {
  RecountRecord r;
  r.record = j.at("record").get<std::size_t>();
  r.video_id = j.at("video_id").get<std::string>();
  r.frame_index = j.at("frame_index").get<std::uint64_t>();
  const auto& b = j.at("box");
  r.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  r.detection_score = j.value("detection_score", 0.0);
  r.untrained_cell = j.value("untrained_cell", false);
  auto category_index = [&](const std::string& task, const std::string& name) -> std::size_t {
    if (!model) return 0;
    const auto t = model->task_index(task);
    const auto c = model->tasks[t].index_of(name);
    return c ? *c : 0;
  };
  for (const auto& [task, tj] : j.at("tasks").items()) {
    TaskRecount tr;
    tr.task = task;
    tr.max_cls_score = tj.value("cls_score", 0.0);
    if (!tj.at("category").is_null()) {
      const auto name = tj.at("category").get<std::string>();
      tr.predicted = ConceptScore{category_index(task, name), name, tj.at("cls_score").get<double>(),
                                  tj.at("anomaly_score").get<double>()};
    }
    if (tj.contains("candidates"))
      for (const auto& cj : tj.at("candidates")) {
        const auto name = cj.at("category").get<std::string>();
        tr.candidates.push_back({category_index(task, name), name, cj.at("cls_score").get<double>(),
                                 cj.at("anomaly_score").get<double>()});
      }
    r.tasks.push_back(std::move(tr));
  }
  return r;
}

inline void serialize(BlobWriter& w, const RecountModel& m) {
  w.put_header("RCNT", 1, 0);
  w.put<std::uint64_t>(m.tasks.size());
  for (std::size_t t = 0; t < m.tasks.size(); ++t) {
    w.put_string(m.tasks[t].name);
    w.put<std::uint64_t>(m.tasks[t].categories.size());
    for (std::size_t c = 0; c < m.tasks[t].categories.size(); ++c) {
      w.put_string(m.tasks[t].categories[c]);
      w.put(m.densities[t][c].bandwidth());
      w.put_vector(m.densities[t][c].samples());
    }
  }
}

inline RecountModel deserialize_recount(BlobReader& r) {
  r.expect_header("RCNT", 1);
  RecountModel m;
  const auto tasks = r.get<std::uint64_t>();
  for (std::uint64_t t = 0; t < tasks; ++t) {
    ConceptTask task;
    task.name = r.get_string();
    std::vector<Kde1d> per_task;
    const auto cats = r.get<std::uint64_t>();
    for (std::uint64_t c = 0; c < cats; ++c) {
      task.categories.push_back(r.get_string());
      const double h = r.get<double>();
      per_task.push_back(Kde1d::with_bandwidth(r.get_vector<double>(), h));
    }
    m.tasks.push_back(std::move(task));
    m.densities.push_back(std::move(per_task));
  }
  return m;
}

}  // namespace aed
