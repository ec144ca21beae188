#pragma once

// Feature packs: the on-disk interchange between a region-feature extractor
// and the detection engine.
//
//   manifest.json       version, feature_dim, record_count, videos, tasks
//   records.jsonl       one RegionRecord per line
//   features.bin        n x d float32, row-major, little-endian, no header
//   scores_<task>.bin   n x |categories| float32, same layout
//   labels.jsonl        optional ground truth (frame and region lines)

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "aed/binary_io.hpp"
#include "aed/common.hpp"

namespace aed {

inline constexpr int kPackVersion = 1;

/// Scores this close outside [0,1] are clamped on write; anything further out
/// is rejected.
inline constexpr double kScoreClampSlack = 1e-6;

struct VideoInfo {
  std::string video_id;
  int frame_width = 0;
  int frame_height = 0;
  /// Number of frames in the video, including frames without regions.
  std::uint64_t frame_count = 0;
};

struct ConceptTask {
  std::string name;
  std::vector<std::string> categories;

  std::size_t score_dim() const noexcept { return categories.size(); }
  std::optional<std::size_t> index_of(std::string_view category) const {
    for (std::size_t i = 0; i < categories.size(); ++i)
      if (categories[i] == category) return i;
    return std::nullopt;
  }
};

struct PackManifest {
  int version = kPackVersion;
  std::size_t feature_dim = 0;
  std::size_t record_count = 0;
  std::vector<VideoInfo> videos;
  std::vector<ConceptTask> tasks;

  const VideoInfo* find_video(std::string_view id) const {
    for (const auto& v : videos)
      if (v.video_id == id) return &v;
    return nullptr;
  }
  std::optional<std::size_t> task_index(std::string_view name) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].name == name) return i;
    return std::nullopt;
  }
};

struct RegionRecord {
  std::string video_id;
  std::uint64_t frame_index = 0;
  Box box;
  std::size_t feature_offset = 0;
  std::vector<std::size_t> score_offsets;  // one per task

  friend bool operator==(const RegionRecord&, const RegionRecord&) = default;
};

/// Binary mask, run-length encoded row-major as alternating runs of 0s and
/// 1s, starting with 0s.
struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  std::vector<std::uint8_t> decode() const {
    std::vector<std::uint8_t> bits;
    bits.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    std::uint8_t value = 0;
    for (auto run : counts) {
      bits.insert(bits.end(), run, value);
      value ^= 1;
    }
    if (bits.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      fail_validation("RLE mask decodes to ", bits.size(), " pixels, expected ", width, "x",
                      height);
    return bits;
  }

  static RleMask encode(int width, int height, std::span<const std::uint8_t> bits) {
    RleMask m{width, height, {}};
    std::uint8_t value = 0;
    std::uint32_t run = 0;
    for (auto b : bits) {
      if ((b != 0) != (value != 0)) {
        m.counts.push_back(run);
        run = 0;
        value ^= 1;
      }
      ++run;
    }
    m.counts.push_back(run);
    return m;
  }

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

struct FrameLabel {
  std::string video_id;
  std::uint64_t frame_index = 0;
  bool abnormal = false;
  std::optional<RleMask> mask;
};

struct RegionLabel {
  std::size_t record = 0;
  bool abnormal = false;
  /// task name -> annotated category names
  std::map<std::string, std::vector<std::string>> categories;
};

struct GroundTruth {
  std::vector<FrameLabel> frames;
  std::vector<RegionLabel> regions;

  const RegionLabel* for_record(std::size_t record) const {
    for (const auto& r : regions)
      if (r.record == record) return &r;
    return nullptr;
  }
};

struct FeaturePack {
  PackManifest manifest;
  MatrixF features;             // n x d
  std::vector<MatrixF> scores;  // one n x |categories| matrix per task
  std::vector<RegionRecord> records;
  std::optional<GroundTruth> labels;

  std::size_t size() const noexcept { return records.size(); }
  std::size_t feature_dim() const noexcept { return manifest.feature_dim; }

  std::span<const float> feature(std::size_t record) const {
    return features.row(records[record].feature_offset);
  }
  std::span<const float> task_scores(std::size_t task, std::size_t record) const {
    return scores[task].row(records[record].score_offsets[task]);
  }
  /// Feature rows of all records, in record order, as doubles.
  MatrixD feature_matrix() const {
    MatrixD m(records.size(), manifest.feature_dim);
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto src = feature(i);
      std::copy(src.begin(), src.end(), m.row(i).begin());
    }
    return m;
  }
};

// ---------------------------------------------------------------------------
// JSON mapping

inline nlohmann::json to_json(const PackManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["feature_dim"] = m.feature_dim;
  j["record_count"] = m.record_count;
  j["videos"] = nlohmann::json::array();
  for (const auto& v : m.videos)
    j["videos"].push_back({{"video_id", v.video_id},
                           {"frame_width", v.frame_width},
                           {"frame_height", v.frame_height},
                           {"frame_count", v.frame_count}});
  j["tasks"] = nlohmann::json::array();
  for (const auto& t : m.tasks) j["tasks"].push_back({{"name", t.name}, {"categories", t.categories}});
  return j;
}

inline PackManifest manifest_from_json(const nlohmann::json& j) {
  PackManifest m;
  m.version = j.at("version").get<int>();
  m.feature_dim = j.at("feature_dim").get<std::size_t>();
  m.record_count = j.at("record_count").get<std::size_t>();
  for (const auto& v : j.at("videos"))
    m.videos.push_back({v.at("video_id").get<std::string>(), v.at("frame_width").get<int>(),
                        v.at("frame_height").get<int>(),
                        v.value("frame_count", std::uint64_t{0})});
  for (const auto& t : j.at("tasks"))
    m.tasks.push_back(
        {t.at("name").get<std::string>(), t.at("categories").get<std::vector<std::string>>()});
  return m;
}

inline nlohmann::json to_json(const RegionRecord& r) {
  return {{"video_id", r.video_id},
          {"frame_index", r.frame_index},
          {"box", {r.box.x, r.box.y, r.box.w, r.box.h}},
          {"feature_offset", r.feature_offset},
          {"score_offsets", r.score_offsets}};
}

inline RegionRecord record_from_json(const nlohmann::json& j) {
  RegionRecord r;
  r.video_id = j.at("video_id").get<std::string>();
  r.frame_index = j.at("frame_index").get<std::uint64_t>();
  const auto& b = j.at("box");
  if (!b.is_array() || b.size() != 4) fail_validation("box must be [x, y, w, h]");
  r.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  r.feature_offset = j.at("feature_offset").get<std::size_t>();
  r.score_offsets = j.at("score_offsets").get<std::vector<std::size_t>>();
  return r;
}

inline nlohmann::json to_json(const RleMask& m) {
  return {{"width", m.width}, {"height", m.height}, {"counts", m.counts}};
}

inline RleMask mask_from_json(const nlohmann::json& j) {
  return {j.at("width").get<int>(), j.at("height").get<int>(),
          j.at("counts").get<std::vector<std::uint32_t>>()};
}

inline std::vector<nlohmann::json> to_json_lines(const GroundTruth& gt) {
  std::vector<nlohmann::json> lines;
  for (const auto& f : gt.frames) {
    nlohmann::json j = {{"kind", "frame"},
                        {"video_id", f.video_id},
                        {"frame_index", f.frame_index},
                        {"abnormal", f.abnormal}};
    if (f.mask) j["mask"] = to_json(*f.mask);
    lines.push_back(std::move(j));
  }
  for (const auto& r : gt.regions)
    lines.push_back({{"kind", "region"},
                     {"record", r.record},
                     {"abnormal", r.abnormal},
                     {"categories", r.categories}});
  return lines;
}

inline void add_label_line(GroundTruth& gt, const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "frame") {
    FrameLabel f{j.at("video_id").get<std::string>(), j.at("frame_index").get<std::uint64_t>(),
                 j.at("abnormal").get<bool>(), std::nullopt};
    if (j.contains("mask")) f.mask = mask_from_json(j.at("mask"));
    gt.frames.push_back(std::move(f));
  } else if (kind == "region") {
    RegionLabel r{j.at("record").get<std::size_t>(), j.value("abnormal", false), {}};
    if (j.contains("categories"))
      r.categories = j.at("categories").get<std::map<std::string, std::vector<std::string>>>();
    gt.regions.push_back(std::move(r));
  } else {
    fail_validation("unknown label kind '", kind, "'");
  }
}

// ---------------------------------------------------------------------------
// Validation

/// Checks every pack invariant; throws ValidationError naming the offending
/// record. Returns warnings for suspicious-but-legal content.
inline std::vector<std::string> validate_pack(const FeaturePack& pack) {
  const auto& m = pack.manifest;
  std::vector<std::string> warnings;
  if (m.version != kPackVersion)
    fail_validation("pack version ", m.version, " is not supported (expected ", kPackVersion, ")");
  if (m.feature_dim == 0) fail_validation("feature_dim must be positive");
  if (m.tasks.empty()) fail_validation("pack declares no concept tasks");
  {
    std::set<std::string> task_names;
    for (const auto& t : m.tasks) {
      if (t.name.empty()) fail_validation("task with empty name");
      if (!task_names.insert(t.name).second) fail_validation("duplicate task '", t.name, "'");
      if (t.categories.empty()) fail_validation("task '", t.name, "' has no categories");
      std::set<std::string> cats(t.categories.begin(), t.categories.end());
      if (cats.size() != t.categories.size())
        fail_validation("task '", t.name, "' has duplicate category names");
    }
  }
  {
    std::set<std::string> ids;
    for (const auto& v : m.videos) {
      if (!ids.insert(v.video_id).second) fail_validation("duplicate video '", v.video_id, "'");
      if (v.frame_width <= 0 || v.frame_height <= 0)
        fail_validation("video '", v.video_id, "' has non-positive frame dimensions");
    }
  }

  const std::size_t n = m.record_count;
  if (pack.records.size() != n)
    fail_validation("record_count is ", n, " but ", pack.records.size(), " records present");
  if (pack.features.rows() != n || pack.features.cols() != m.feature_dim)
    fail_validation("feature matrix is ", pack.features.rows(), "x", pack.features.cols(),
                    ", expected ", n, "x", m.feature_dim);
  if (pack.scores.size() != m.tasks.size())
    fail_validation(pack.scores.size(), " score matrices for ", m.tasks.size(), " tasks");
  for (std::size_t t = 0; t < m.tasks.size(); ++t)
    if (pack.scores[t].rows() != n || pack.scores[t].cols() != m.tasks[t].score_dim())
      fail_validation("score matrix '", m.tasks[t].name, "' is ", pack.scores[t].rows(), "x",
                      pack.scores[t].cols(), ", expected ", n, "x", m.tasks[t].score_dim());

  for (std::size_t row = 0; row < n; ++row) {
    for (float v : pack.features.row(row))
      if (!std::isfinite(v)) fail_validation("record ", row, ": non-finite feature value");
    for (std::size_t t = 0; t < m.tasks.size(); ++t)
      for (float v : pack.scores[t].row(row)) {
        if (!std::isfinite(v)) fail_validation("record ", row, ": non-finite score");
        if (v < 0.0f || v > 1.0f)
          fail_validation("record ", row, ": score ", v, " for task '", m.tasks[t].name,
                          "' outside [0,1]");
      }
  }

  using Key = std::tuple<std::string, std::uint64_t, double, double, double, double, std::size_t,
                         std::vector<std::size_t>>;
  std::set<Key> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = pack.records[i];
    const VideoInfo* video = m.find_video(r.video_id);
    if (!video) fail_validation("record ", i, ": unknown video '", r.video_id, "'");
    if (!(r.box.w > 0.0) || !(r.box.h > 0.0))
      fail_validation("record ", i, ": box has non-positive extent");
    if (!(r.box.x >= 0.0) || !(r.box.y >= 0.0) || r.box.x + r.box.w > video->frame_width ||
        r.box.y + r.box.h > video->frame_height)
      fail_validation("record ", i, ": box [", r.box.x, ", ", r.box.y, ", ", r.box.w, ", ",
                      r.box.h, "] outside ", video->frame_width, "x", video->frame_height,
                      " frame");
    if (video->frame_count > 0 && r.frame_index >= video->frame_count)
      fail_validation("record ", i, ": frame_index ", r.frame_index, " >= frame_count ",
                      video->frame_count);
    if (r.feature_offset >= n)
      fail_validation("record ", i, ": feature_offset ", r.feature_offset, " >= ", n);
    if (r.score_offsets.size() != m.tasks.size())
      fail_validation("record ", i, ": ", r.score_offsets.size(), " score offsets for ",
                      m.tasks.size(), " tasks");
    for (auto off : r.score_offsets)
      if (off >= n) fail_validation("record ", i, ": score offset ", off, " >= ", n);
    if (!seen.emplace(r.video_id, r.frame_index, r.box.x, r.box.y, r.box.w, r.box.h,
                      r.feature_offset, r.score_offsets)
             .second)
      warnings.push_back(detail::concat("record ", i, ": duplicate region record"));
  }

  if (pack.labels) {
    for (const auto& f : pack.labels->frames) {
      const VideoInfo* video = m.find_video(f.video_id);
      if (!video) fail_validation("frame label: unknown video '", f.video_id, "'");
      if (f.mask) {
        if (f.mask->width != video->frame_width || f.mask->height != video->frame_height)
          fail_validation("frame label ", f.video_id, "#", f.frame_index, ": mask is ",
                          f.mask->width, "x", f.mask->height, ", frame is ", video->frame_width,
                          "x", video->frame_height);
        f.mask->decode();
      }
    }
    for (const auto& r : pack.labels->regions) {
      if (r.record >= n) fail_validation("region label: record ", r.record, " >= ", n);
      for (const auto& [task, cats] : r.categories) {
        auto ti = m.task_index(task);
        if (!ti) fail_validation("region label ", r.record, ": unknown task '", task, "'");
        for (const auto& c : cats)
          if (!m.tasks[*ti].index_of(c))
            fail_validation("region label ", r.record, ": unknown category '", c,
                            "' in task '", task, "'");
      }
    }
  }
  return warnings;
}

// ---------------------------------------------------------------------------
// Reading and writing

inline std::filesystem::path score_file_name(const ConceptTask& task) {
  return "scores_" + task.name + ".bin";
}

/// Writes a pack directory. Scores within 1e-6 of [0,1] are clamped; the
/// pack is then fully validated. Returns warnings (also sent to the sink).
inline std::vector<std::string> write_pack(const FeaturePack& input,
                                           const std::filesystem::path& dir) {
  FeaturePack pack = input;
  for (std::size_t t = 0; t < pack.scores.size(); ++t)
    for (std::size_t i = 0; i < pack.scores[t].data().size(); ++i) {
      float& v = pack.scores[t].data()[i];
      if (v < 0.0f && v >= -kScoreClampSlack) v = 0.0f;
      if (v > 1.0f && v <= 1.0 + kScoreClampSlack) v = 1.0f;
    }
  auto warnings = validate_pack(pack);
  for (const auto& w : warnings) warn(w);

  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << to_json(pack.manifest).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "records.jsonl", std::ios::trunc);
    for (const auto& r : pack.records) out << to_json(r).dump() << '\n';
  }
  write_float_matrix(dir / "features.bin", pack.features);
  for (std::size_t t = 0; t < pack.manifest.tasks.size(); ++t)
    write_float_matrix(dir / score_file_name(pack.manifest.tasks[t]), pack.scores[t]);
  std::filesystem::remove(dir / "labels.jsonl");
  if (pack.labels) {
    std::ofstream out(dir / "labels.jsonl", std::ios::trunc);
    for (const auto& line : to_json_lines(*pack.labels)) out << line.dump() << '\n';
  }
  return warnings;
}

namespace detail {

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_validation("missing file ", path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail_validation(path.filename().string(), ": ", e.what());
  }
}

template <class Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail_validation("missing file ", path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail_validation(path.filename().string(), ":", lineno, ": ", e.what());
    }
  }
}

}  // namespace detail

/// Reads and validates a pack directory. Warnings go to the sink and, when
/// given, to `warnings`.
inline FeaturePack read_pack(const std::filesystem::path& dir,
                             std::vector<std::string>* warnings = nullptr) {
  if (!std::filesystem::is_directory(dir)) fail_validation("pack directory ", dir.string(), " not found");
  FeaturePack pack;
  try {
    pack.manifest = manifest_from_json(detail::parse_json_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    fail_validation("manifest.json: ", e.what());
  }
  if (pack.manifest.version != kPackVersion)
    fail_validation("pack version ", pack.manifest.version, " is not supported (expected ",
                    kPackVersion, ")");
  const std::size_t n = pack.manifest.record_count;
  pack.features = read_float_matrix(dir / "features.bin", n, pack.manifest.feature_dim);
  for (const auto& task : pack.manifest.tasks)
    pack.scores.push_back(read_float_matrix(dir / score_file_name(task), n, task.score_dim()));
  detail::for_each_json_line(dir / "records.jsonl", [&](const nlohmann::json& j) {
    pack.records.push_back(record_from_json(j));
  });
  if (std::filesystem::exists(dir / "labels.jsonl")) {
    GroundTruth gt;
    detail::for_each_json_line(dir / "labels.jsonl",
                               [&](const nlohmann::json& j) { add_label_line(gt, j); });
    pack.labels = std::move(gt);
  }
  auto found = validate_pack(pack);
  for (const auto& w : found) warn(w);
  if (warnings) *warnings = std::move(found);
  return pack;
}

/// New pack holding `records` of `pack` (in that order) with compacted
/// matrices. Region labels follow their records; frame labels are kept for
/// frames that still have records.
inline FeaturePack subset_pack(const FeaturePack& pack, std::span<const std::size_t> records) {
  FeaturePack out;
  out.manifest = pack.manifest;
  out.manifest.record_count = records.size();
  out.features = MatrixF(records.size(), pack.manifest.feature_dim);
  for (const auto& task : pack.manifest.tasks) out.scores.emplace_back(records.size(), task.score_dim());
  std::map<std::size_t, std::size_t> remap;
  std::set<std::pair<std::string, std::uint64_t>> frames;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t src = records[i];
    remap[src] = i;
    RegionRecord r = pack.records[src];
    auto f = pack.feature(src);
    std::copy(f.begin(), f.end(), out.features.row(i).begin());
    for (std::size_t t = 0; t < pack.scores.size(); ++t) {
      auto s = pack.task_scores(t, src);
      std::copy(s.begin(), s.end(), out.scores[t].row(i).begin());
      r.score_offsets[t] = i;
    }
    r.feature_offset = i;
    frames.emplace(r.video_id, r.frame_index);
    out.records.push_back(std::move(r));
  }
  if (pack.labels) {
    GroundTruth gt;
    for (const auto& f : pack.labels->frames)
      if (frames.count({f.video_id, f.frame_index})) gt.frames.push_back(f);
    for (const auto& r : pack.labels->regions)
      if (auto it = remap.find(r.record); it != remap.end()) {
        RegionLabel copy = r;
        copy.record = it->second;
        gt.regions.push_back(std::move(copy));
      }
    out.labels = std::move(gt);
  }
  return out;
}

}  // namespace aed
