#pragma once

// Deterministic synthetic feature packs with planted anomalies.
//
// Normal region features live near a per-cell centre in a low-dimensional
// latent space, embedded into feature space by a random orthonormal map
// plus small isotropic noise. Normal offsets are Gaussian with the cluster
// scale, truncated to `normal_radius` scales; anomalies sit exactly
// `displacement` scales from their cell centre. Concept scores mark one
// common category per task active for normal regions and the task's rare
// category active for anomalies.

#include <cmath>
#include <iomanip>
#include <sstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "aed/common.hpp"
#include "aed/evaluation.hpp"
#include "aed/feature_pack.hpp"
#include "aed/rng.hpp"

namespace aed {

struct SynthTask {
  std::string name;
  std::vector<std::string> common;
  std::vector<std::string> rare;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t videos = 2;
  std::size_t train_frames = 500;  // per pack, split across videos
  std::size_t test_frames = 500;
  std::size_t regions_per_frame = 4;
  int frame_width = 360;
  int frame_height = 240;
  std::size_t grid_rows = 3;
  std::size_t grid_cols = 4;
  std::size_t feature_dim = 64;
  std::size_t latent_dim = 8;
  double cluster_scale = 1.0;
  double cluster_spread = 10.0;
  double normal_radius = 4.0;  // in cluster scales
  double noise = 0.01;
  double anomaly_fraction = 0.05;
  double displacement = 8.0;   // in cluster scales
  double active_low = 0.6, active_high = 0.95;
  double inactive_high = 0.08;
  std::vector<SynthTask> tasks = {
      {"object", {"person", "bicycle"}, {"truck"}},
      {"action", {"walking", "standing"}, {"bending"}},
      {"attribute", {"adult", "carrying"}, {"child"}},
  };

  void validate() const {
    if (!(anomaly_fraction > 0.0 && anomaly_fraction < 0.5))
      fail_validation("synth: anomaly_fraction must be in (0, 0.5), got ", anomaly_fraction);
    if (!(displacement > 0.0)) fail_validation("synth: displacement must be positive");
    if (!(cluster_scale > 0.0)) fail_validation("synth: cluster_scale must be positive");
    if (!(normal_radius > 0.0)) fail_validation("synth: normal_radius must be positive");
    if (noise < 0.0) fail_validation("synth: noise must be non-negative");
    if (videos == 0 || train_frames < videos || test_frames < videos)
      fail_validation("synth: need at least one frame per video");
    if (regions_per_frame == 0) fail_validation("synth: regions_per_frame must be positive");
    if (grid_rows == 0 || grid_cols == 0) fail_validation("synth: grid must be non-empty");
    if (frame_width < static_cast<int>(4 * grid_cols) || frame_height < static_cast<int>(4 * grid_rows))
      fail_validation("synth: frame too small for the grid");
    if (latent_dim == 0 || latent_dim > feature_dim)
      fail_validation("synth: latent_dim must be in [1, feature_dim]");
    if (!(0.0 <= inactive_high && inactive_high < kMinClassificationScore))
      fail_validation("synth: inactive_high must be in [0, 0.1)");
    if (!(kMinClassificationScore <= active_low && active_low <= active_high && active_high <= 1.0))
      fail_validation("synth: active score range must lie in [0.1, 1]");
    if (tasks.empty()) fail_validation("synth: no concept tasks");
    for (const auto& t : tasks)
      if (t.common.empty() || t.rare.empty())
        fail_validation("synth: task '", t.name, "' needs common and rare categories");
  }

  std::vector<ConceptTask> concept_tasks() const {
    std::vector<ConceptTask> out;
    for (const auto& t : tasks) {
      ConceptTask c{t.name, t.common};
      c.categories.insert(c.categories.end(), t.rare.begin(), t.rare.end());
      out.push_back(std::move(c));
    }
    return out;
  }

  /// Rare categories per task; these are the unseen ones in evaluation.
  std::map<std::string, std::vector<std::string>> unseen_categories() const {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& t : tasks) out[t.name] = t.rare;
    return out;
  }
};

inline void from_json(const nlohmann::json& j, SynthTask& t) {
  t.name = j.at("name").get<std::string>();
  t.common = j.at("common").get<std::vector<std::string>>();
  t.rare = j.at("rare").get<std::vector<std::string>>();
}

inline void to_json(nlohmann::json& j, const SynthTask& t) {
  j = {{"name", t.name}, {"common", t.common}, {"rare", t.rare}};
}

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"seed", c.seed},
          {"videos", c.videos},
          {"train_frames", c.train_frames},
          {"test_frames", c.test_frames},
          {"regions_per_frame", c.regions_per_frame},
          {"frame_width", c.frame_width},
          {"frame_height", c.frame_height},
          {"grid_rows", c.grid_rows},
          {"grid_cols", c.grid_cols},
          {"feature_dim", c.feature_dim},
          {"latent_dim", c.latent_dim},
          {"cluster_scale", c.cluster_scale},
          {"cluster_spread", c.cluster_spread},
          {"normal_radius", c.normal_radius},
          {"noise", c.noise},
          {"anomaly_fraction", c.anomaly_fraction},
          {"displacement", c.displacement},
          {"active_low", c.active_low},
          {"active_high", c.active_high},
          {"inactive_high", c.inactive_high},
          {"tasks", c.tasks}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail_validation("synth config must be a JSON object");
  SynthConfig c;
  const auto known = to_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) fail_validation("synth config: unknown key '", key, "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("seed", c.seed);
    get("videos", c.videos);
    get("train_frames", c.train_frames);
    get("test_frames", c.test_frames);
    get("regions_per_frame", c.regions_per_frame);
    get("frame_width", c.frame_width);
    get("frame_height", c.frame_height);
    get("grid_rows", c.grid_rows);
    get("grid_cols", c.grid_cols);
    get("feature_dim", c.feature_dim);
    get("latent_dim", c.latent_dim);
    get("cluster_scale", c.cluster_scale);
    get("cluster_spread", c.cluster_spread);
    get("normal_radius", c.normal_radius);
    get("noise", c.noise);
    get("anomaly_fraction", c.anomaly_fraction);
    get("displacement", c.displacement);
    get("active_low", c.active_low);
    get("active_high", c.active_high);
    get("inactive_high", c.inactive_high);
    get("tasks", c.tasks);
  } catch (const nlohmann::json::exception& e) {
    fail_validation("synth config: ", e.what());
  }
  c.validate();
  return c;
}

namespace detail {

/// Random d x k matrix with orthonormal columns (Gram-Schmidt on Gaussians).
inline MatrixD random_orthonormal(std::size_t d, std::size_t k, Rng& rng) {
  MatrixD q(k, d);  // rows are the basis vectors
  for (std::size_t c = 0; c < k; ++c) {
    for (;;) {
      auto v = q.row(c);
      for (auto& x : v) x = rng.normal();
      for (std::size_t p = 0; p < c; ++p) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += v[i] * q(p, i);
        for (std::size_t i = 0; i < d; ++i) v[i] -= dot * q(p, i);
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-6) continue;
      for (auto& x : v) x /= norm;
      break;
    }
  }
  return q;
}

inline std::vector<double> unit_vector(std::size_t k, Rng& rng) {
  std::vector<double> v(k);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

struct SynthEnvironment {
  MatrixD embedding;                          // latent_dim x feature_dim
  std::vector<std::vector<double>> centres;   // per cell, latent
};

inline SynthEnvironment synth_environment(const SynthConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 1));
  SynthEnvironment env;
  env.embedding = random_orthonormal(cfg.feature_dim, cfg.latent_dim, rng);
  for (std::size_t c = 0; c < cfg.grid_rows * cfg.grid_cols; ++c) {
    std::vector<double> centre(cfg.latent_dim);
    for (auto& x : centre) x = rng.normal(0.0, cfg.cluster_spread);
    env.centres.push_back(std::move(centre));
  }
  return env;
}

inline FeaturePack synth_pack(const SynthConfig& cfg, std::size_t frames, bool with_anomalies,
                              std::uint64_t stream, const std::string& video_prefix) {
  cfg.validate();
  const auto env = synth_environment(cfg);
  Rng rng(derive_seed(cfg.seed, stream));

  FeaturePack pack;
  pack.manifest.feature_dim = cfg.feature_dim;
  pack.manifest.tasks = cfg.concept_tasks();
  std::vector<std::size_t> frames_per_video(cfg.videos, frames / cfg.videos);
  for (std::size_t v = 0; v < frames % cfg.videos; ++v) ++frames_per_video[v];
  for (std::size_t v = 0; v < cfg.videos; ++v) {
    std::ostringstream id;
    id << video_prefix << "_" << std::setw(2) << std::setfill('0') << v;
    pack.manifest.videos.push_back({id.str(), cfg.frame_width, cfg.frame_height, frames_per_video[v]});
  }

  const std::size_t n = frames * cfg.regions_per_frame;
  std::vector<std::uint8_t> anomalous(n, 0);
  if (with_anomalies) {
    const auto count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.anomaly_fraction * static_cast<double>(n))));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < std::min(count, n); ++i) anomalous[order[i]] = 1;
  }

  pack.manifest.record_count = n;
  pack.features = MatrixF(n, cfg.feature_dim);
  for (const auto& t : pack.manifest.tasks) pack.scores.emplace_back(n, t.score_dim());
  GroundTruth gt;

  const double cell_w = static_cast<double>(cfg.frame_width) / static_cast<double>(cfg.grid_cols);
  const double cell_h = static_cast<double>(cfg.frame_height) / static_cast<double>(cfg.grid_rows);
  const double max_w = std::max(2.0, std::min(32.0, cell_w));
  const double max_h = std::max(2.0, std::min(64.0, cell_h));
  std::size_t i = 0;
  std::vector<double> latent(cfg.latent_dim);
  for (std::size_t v = 0; v < cfg.videos; ++v) {
    const auto& video = pack.manifest.videos[v];
    for (std::uint64_t f = 0; f < video.frame_count; ++f) {
      std::vector<Box> abnormal_boxes;
      for (std::size_t r = 0; r < cfg.regions_per_frame; ++r, ++i) {
        const std::size_t row = rng.below(cfg.grid_rows);
        const std::size_t col = rng.below(cfg.grid_cols);
        const double w = std::floor(rng.uniform(max_w / 2.0, max_w));
        const double h = std::floor(rng.uniform(max_h / 2.0, max_h));
        // Centre strictly inside the cell and the box inside the frame.
        const double lo_x = std::max(col * cell_w + 0.5, w / 2.0);
        const double hi_x = std::min((col + 1) * cell_w - 0.5, cfg.frame_width - w / 2.0);
        const double lo_y = std::max(row * cell_h + 0.5, h / 2.0);
        const double hi_y = std::min((row + 1) * cell_h - 0.5, cfg.frame_height - h / 2.0);
        const double cx = rng.uniform(lo_x, hi_x);
        const double cy = rng.uniform(lo_y, hi_y);
        const Box box{cx - w / 2.0, cy - h / 2.0, w, h};

        const auto& centre = env.centres[row * cfg.grid_cols + col];
        if (anomalous[i]) {
          const auto dir = unit_vector(cfg.latent_dim, rng);
          for (std::size_t k = 0; k < cfg.latent_dim; ++k)
            latent[k] = centre[k] + cfg.displacement * cfg.cluster_scale * dir[k];
        } else {
          const double radius = cfg.normal_radius * cfg.cluster_scale;
          std::vector<double> off(cfg.latent_dim);
          for (;;) {
            double norm2 = 0.0;
            for (auto& x : off) {
              x = rng.normal(0.0, cfg.cluster_scale);
              norm2 += x * x;
            }
            if (norm2 <= radius * radius) break;
          }
          for (std::size_t k = 0; k < cfg.latent_dim; ++k) latent[k] = centre[k] + off[k];
        }
        auto feat = pack.features.row(i);
        for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
          double x = cfg.noise * rng.normal();
          for (std::size_t k = 0; k < cfg.latent_dim; ++k) x += latent[k] * env.embedding(k, d);
          feat[d] = static_cast<float>(x);
        }

        RegionLabel label{i, anomalous[i] != 0, {}};
        for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
          const auto& task = cfg.tasks[t];
          const std::size_t n_common = task.common.size();
          const std::size_t active = anomalous[i] ? n_common + rng.below(task.rare.size()) : rng.below(n_common);
          auto scores = pack.scores[t].row(i);
          for (std::size_t c = 0; c < scores.size(); ++c)
            scores[c] = static_cast<float>(c == active ? rng.uniform(cfg.active_low, cfg.active_high)
                                                       : rng.uniform(0.0, cfg.inactive_high));
          label.categories[task.name] = {pack.manifest.tasks[t].categories[active]};
        }
        gt.regions.push_back(std::move(label));

        RegionRecord rec;
        rec.video_id = video.video_id;
        rec.frame_index = f;
        rec.box = box;
        rec.feature_offset = i;
        rec.score_offsets.assign(cfg.tasks.size(), i);
        pack.records.push_back(std::move(rec));
        if (anomalous[i]) abnormal_boxes.push_back(box);
      }
      FrameLabel fl{video.video_id, f, !abnormal_boxes.empty(), std::nullopt};
      if (fl.abnormal)
        fl.mask = RleMask::encode(cfg.frame_width, cfg.frame_height,
                                  rasterize_boxes(cfg.frame_width, cfg.frame_height, abnormal_boxes));
      gt.frames.push_back(std::move(fl));
    }
  }
  pack.labels = std::move(gt);
  validate_pack(pack);
  return pack;
}

}  // namespace detail

/// Test pack with planted anomalies, region/frame labels and masks.
inline FeaturePack generate(const SynthConfig& cfg) {
  return detail::synth_pack(cfg, cfg.test_frames, true, 3, "test");
}

/// Normal-only training pack from the same environment.
inline FeaturePack generate_training(const SynthConfig& cfg) {
  return detail::synth_pack(cfg, cfg.train_frames, false, 2, "train");
}

/// Annotated image collection for the unseen-category split: 8 object
/// categories, `images` images with 1-2 single-category regions each,
/// features clustered by category.
inline FeaturePack generate_split_fixture(std::uint64_t seed, std::size_t images = 100) {
  static const std::vector<std::string> kCategories = {"person", "car",   "bicycle", "dog",
                                                       "bag",    "bench", "umbrella", "cart"};
  constexpr std::size_t kDim = 32;
  constexpr int kWidth = 640, kHeight = 480;
  Rng rng(derive_seed(seed, 7));

  std::vector<std::vector<double>> centres;
  for (std::size_t c = 0; c < kCategories.size(); ++c) {
    std::vector<double> v(kDim);
    for (auto& x : v) x = rng.normal(0.0, 5.0);
    centres.push_back(std::move(v));
  }

  FeaturePack pack;
  pack.manifest.feature_dim = kDim;
  pack.manifest.tasks = {{"object", kCategories}};
  pack.manifest.videos = {{"images", kWidth, kHeight, images}};
  GroundTruth gt;
  std::vector<float> feat(kDim), scores(kCategories.size());
  std::size_t n = 0;
  for (std::size_t img = 0; img < images; ++img) {
    const std::size_t regions = 1 + rng.below(2);
    for (std::size_t r = 0; r < regions; ++r, ++n) {
      const std::size_t cat = rng.below(kCategories.size());
      for (std::size_t d = 0; d < kDim; ++d) feat[d] = static_cast<float>(centres[cat][d] + rng.normal());
      for (std::size_t c = 0; c < scores.size(); ++c)
        scores[c] = static_cast<float>(c == cat ? rng.uniform(0.6, 0.95) : rng.uniform(0.0, 0.08));
      const double w = std::floor(rng.uniform(40.0, 160.0));
      const double h = std::floor(rng.uniform(40.0, 160.0));
      const Box box{std::floor(rng.uniform(0.0, kWidth - w)), std::floor(rng.uniform(0.0, kHeight - h)), w, h};
      pack.features.append_row(feat);
      if (pack.scores.empty()) pack.scores.emplace_back(0, kCategories.size());
      pack.scores[0].append_row(scores);
      pack.records.push_back({"images", img, box, n, {n}});
      gt.regions.push_back({n, false, {{"object", {kCategories[cat]}}}});
    }
    gt.frames.push_back({"images", img, false, std::nullopt});
  }
  pack.manifest.record_count = n;
  pack.labels = std::move(gt);
  validate_pack(pack);
  return pack;
}

/// n points around `clusters` Gaussian centres (per-dimension spread
/// `spread`), each point offset by N(0, scale^2) per dimension.
inline MatrixD generate_clustered(std::size_t n, std::size_t dim, std::size_t clusters, double scale,
                                  double spread, std::uint64_t seed) {
  if (clusters == 0) fail_validation("generate_clustered: need at least one cluster");
  Rng rng(derive_seed(seed, 11));
  MatrixD centres(clusters, dim);
  for (auto& x : centres.data()) x = rng.normal(0.0, spread);
  MatrixD out(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = rng.below(clusters);
    for (std::size_t d = 0; d < dim; ++d) out(i, d) = centres(c, d) + rng.normal(0.0, scale);
  }
  return out;
}

}  // namespace aed
