#pragma once

// Trained model (grid bank + recounting densities), its on-disk directory
// and the detect / recount passes over a pack.
//
// Model directory layout:
//   model.json      manifest: versions, detector config, grid, blob hashes
//   preprocess.bin  shared PCA model or PQ codebook
//   bank.bin        per-cell detectors
//   recount.bin     per-category score densities

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "aed/binary_io.hpp"
#include "aed/evaluation.hpp"
#include "aed/feature_pack.hpp"
#include "aed/gridbank.hpp"
#include "aed/novelty.hpp"
#include "aed/recounting.hpp"

namespace aed {

inline constexpr std::uint32_t kModelMajor = 1;
inline constexpr std::uint32_t kModelMinor = 0;

inline nlohmann::json to_json(const DetectorConfig& c) {
  return {{"detector", to_string(c.kind)},
          {"nn_mode", c.nn_mode == NnMode::pq ? "pq" : "exact"},
          {"pq_code_bits", c.pq_code_bits},
          {"pq_subvectors", c.pq_subvectors},
          {"pq_iterations", c.pq_iterations},
          {"pq_normalize", c.pq_normalize},
          {"pca_dim", c.pca_dim},
          {"ocsvm_sigma", c.ocsvm_sigma},
          {"ocsvm_nu", c.ocsvm_nu},
          {"sigma_convention", c.sigma_convention == SigmaConvention::gamma ? "gamma" : "width"},
          {"ocsvm_tolerance", c.ocsvm_tolerance},
          {"ocsvm_max_iterations", c.ocsvm_max_iterations},
          {"seed", c.seed},
          {"preprocessing", c.preprocessing_descriptor()}};
}

inline DetectorConfig detector_config_from_json(const nlohmann::json& j) {
  DetectorConfig c;
  c.kind = parse_detector_kind(j.at("detector").get<std::string>());
  const auto mode = j.at("nn_mode").get<std::string>();
  if (mode != "pq" && mode != "exact") fail_validation("unknown nn_mode '", mode, "'");
  c.nn_mode = mode == "pq" ? NnMode::pq : NnMode::exact;
  c.pq_code_bits = j.at("pq_code_bits").get<std::size_t>();
  c.pq_subvectors = j.at("pq_subvectors").get<std::size_t>();
  c.pq_iterations = j.at("pq_iterations").get<unsigned>();
  c.pq_normalize = j.at("pq_normalize").get<bool>();
  c.pca_dim = j.at("pca_dim").get<std::size_t>();
  c.ocsvm_sigma = j.at("ocsvm_sigma").get<double>();
  c.ocsvm_nu = j.at("ocsvm_nu").get<double>();
  const auto conv = j.at("sigma_convention").get<std::string>();
  if (conv != "gamma" && conv != "width") fail_validation("unknown sigma_convention '", conv, "'");
  c.sigma_convention = conv == "gamma" ? SigmaConvention::gamma : SigmaConvention::width;
  c.ocsvm_tolerance = j.at("ocsvm_tolerance").get<double>();
  c.ocsvm_max_iterations = j.at("ocsvm_max_iterations").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

struct TrainedModel {
  DetectorConfig config;
  GridBank bank;
  RecountModel recount;
};

inline TrainedModel train_model(const FeaturePack& pack, const DetectorConfig& config, std::size_t grid_rows = 3,
                                std::size_t grid_cols = 4, const BankOptions& options = {}) {
  if (pack.size() == 0) fail_validation("train: pack has no records");
  const auto spec = grid_for_pack(pack, grid_rows, grid_cols);
  return {config, bank_fit(spec, pack, config, options), recount_fit(pack)};
}

namespace detail {

inline std::vector<char> preprocess_blob(const Preprocessor& pre) {
  BlobWriter w;
  w.put_header("PREP", 1, 0);
  w.put<std::uint8_t>(pre.pca ? 1 : 0);
  if (pre.pca) serialize(w, *pre.pca);
  w.put<std::uint8_t>(pre.pq ? 1 : 0);
  if (pre.pq) serialize(w, *pre.pq);
  return w.take();
}

inline Preprocessor read_preprocess_blob(std::span<const char> bytes) {
  BlobReader r(bytes);
  r.expect_header("PREP", 1);
  Preprocessor pre;
  if (r.get<std::uint8_t>()) pre.pca = std::make_shared<const PcaModel>(deserialize_pca(r));
  if (r.get<std::uint8_t>()) pre.pq = std::make_shared<const PqCodebook>(deserialize_pq(r));
  return pre;
}

inline std::vector<char> bank_blob(const GridBank& bank) {
  BlobWriter w;
  bank.serialize(w);
  return w.take();
}

inline std::vector<char> recount_blob(const RecountModel& m) {
  BlobWriter w;
  serialize(w, m);
  return w.take();
}

inline std::vector<std::pair<std::string, std::vector<char>>> model_blobs(const TrainedModel& m) {
  return {{"preprocess.bin", preprocess_blob(m.bank.preprocessor())},
          {"bank.bin", bank_blob(m.bank)},
          {"recount.bin", recount_blob(m.recount)}};
}

inline nlohmann::json grid_json(const GridSpec& g) {
  return {{"rows", g.rows}, {"cols", g.cols}, {"frame_width", g.frame_width}, {"frame_height", g.frame_height}};
}

/// Digest over the detector config and every blob, in manifest order.
inline std::string combined_hash(const nlohmann::json& config,
                                 const std::vector<std::pair<std::string, std::string>>& blob_hashes) {
  std::string text = config.dump();
  for (const auto& [name, hash] : blob_hashes) text += "\n" + name + ":" + hash;
  return fnv1a_hex(text);
}

}  // namespace detail

/// Model hash as it would be written by save_model.
inline std::string model_hash(const TrainedModel& m) {
  std::vector<std::pair<std::string, std::string>> hashes;
  for (const auto& [name, bytes] : detail::model_blobs(m)) hashes.emplace_back(name, fnv1a_hex(bytes));
  return detail::combined_hash(to_json(m.config), hashes);
}

/// Writes the model directory and returns the model hash.
inline std::string save_model(const TrainedModel& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json blobs = nlohmann::json::array();
  std::vector<std::pair<std::string, std::string>> hashes;
  for (const auto& [name, bytes] : detail::model_blobs(m)) {
    write_file_bytes(dir / name, bytes);
    const auto h = fnv1a_hex(bytes);
    hashes.emplace_back(name, h);
    blobs.push_back({{"file", name}, {"fnv1a", h}, {"bytes", bytes.size()}});
  }
  const auto config = to_json(m.config);
  const auto hash = detail::combined_hash(config, hashes);
  nlohmann::json manifest = {{"format", "aed-model"},
                             {"version", {{"major", kModelMajor}, {"minor", kModelMinor}}},
                             {"config", config},
                             {"grid", detail::grid_json(m.bank.spec())},
                             {"feature_dim", m.bank.input_dim()},
                             {"bank", {{"min_samples", m.bank.options().min_samples},
                                       {"rank_normalize", m.bank.options().rank_normalize},
                                       {"fitted_cells", m.bank.fitted_cells()}}},
                             {"tasks", nlohmann::json::array()},
                             {"blobs", blobs},
                             {"model_hash", hash}};
  for (const auto& t : m.recount.tasks) manifest["tasks"].push_back({{"name", t.name}, {"categories", t.categories}});
  std::ofstream out(dir / "model.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw RuntimeError(detail::concat("cannot write ", (dir / "model.json").string()));
  return hash;
}

struct LoadedModel {
  TrainedModel model;
  std::string model_hash;
};

/// Loads and verifies a model directory: every blob hash and the combined
/// hash must match the manifest; newer major versions are rejected.
inline LoadedModel load_model(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "model.json";
  if (!std::filesystem::exists(manifest_path))
    fail_validation(dir.string(), " is not a model directory (no model.json)");
  const auto manifest = detail::parse_json_file(manifest_path);
  try {
    if (manifest.at("format").get<std::string>() != "aed-model")
      fail_validation(manifest_path.string(), ": not a model manifest");
    const auto major = manifest.at("version").at("major").get<std::uint32_t>();
    if (major > kModelMajor)
      fail_validation("model major version ", major, " is newer than supported ", kModelMajor);

    std::map<std::string, std::vector<char>> bytes;
    std::vector<std::pair<std::string, std::string>> hashes;
    for (const auto& b : manifest.at("blobs")) {
      const auto name = b.at("file").get<std::string>();
      if (name.find('/') != std::string::npos || name.find("..") != std::string::npos)
        fail_validation("model blob name '", name, "' is not a plain file name");
      auto data = read_file_bytes(dir / name);
      const auto h = fnv1a_hex(data);
      if (h != b.at("fnv1a").get<std::string>())
        fail_validation("model blob ", name, " hash mismatch (", h, " != ", b.at("fnv1a").get<std::string>(), ")");
      hashes.emplace_back(name, h);
      bytes[name] = std::move(data);
    }
    for (const char* required : {"preprocess.bin", "bank.bin", "recount.bin"})
      if (!bytes.count(required)) fail_validation("model directory lacks ", required);

    const auto config_json = manifest.at("config");
    const auto hash = detail::combined_hash(config_json, hashes);
    if (hash != manifest.at("model_hash").get<std::string>())
      fail_validation("model hash mismatch (", hash, " != ", manifest.at("model_hash").get<std::string>(), ")");

    const auto config = detector_config_from_json(config_json);
    const auto pre = detail::read_preprocess_blob(bytes["preprocess.bin"]);
    BlobReader bank_reader(bytes["bank.bin"]);
    auto bank = GridBank::deserialize(bank_reader, config, pre);
    BlobReader recount_reader(bytes["recount.bin"]);
    auto recount = deserialize_recount(recount_reader);
    return {TrainedModel{config, std::move(bank), std::move(recount)}, hash};
  } catch (const nlohmann::json::exception& e) {
    fail_validation(manifest_path.string(), ": ", e.what());
  }
}

namespace detail {

inline void check_pack_matches(const TrainedModel& m, const FeaturePack& pack) {
  if (pack.feature_dim() != m.bank.input_dim())
    fail_validation("pack feature_dim ", pack.feature_dim(), " does not match model input dim ",
                    m.bank.input_dim());
  for (const auto& v : pack.manifest.videos)
    if (v.frame_width != m.bank.spec().frame_width || v.frame_height != m.bank.spec().frame_height)
      fail_validation("video '", v.video_id, "' is ", v.frame_width, "x", v.frame_height, ", model grid expects ",
                      m.bank.spec().frame_width, "x", m.bank.spec().frame_height);
}

/// Record indices sorted by (video, frame, record).
inline std::vector<std::size_t> canonical_order(const FeaturePack& pack) {
  std::vector<std::size_t> order(pack.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = pack.records[a];
    const auto& rb = pack.records[b];
    return std::tie(ra.video_id, ra.frame_index, a) < std::tie(rb.video_id, rb.frame_index, b);
  });
  return order;
}

}  // namespace detail

/// Scores every region; with a threshold each detection also carries
/// `detected` = score >= threshold.
inline std::vector<Detection> detect(const TrainedModel& m, const FeaturePack& pack,
                                     std::optional<double> threshold = std::nullopt) {
  detail::check_pack_matches(m, pack);
  std::vector<Detection> out;
  out.reserve(pack.size());
  std::vector<double> feature(pack.feature_dim());
  for (auto i : detail::canonical_order(pack)) {
    const auto& r = pack.records[i];
    const auto f = pack.feature(i);
    std::copy(f.begin(), f.end(), feature.begin());
    const auto s = m.bank.score(feature, r.box);
    Detection d{i, r.video_id, r.frame_index, r.box, s.score, s.untrained_cell, std::nullopt};
    if (threshold) d.detected = s.score >= *threshold;
    out.push_back(std::move(d));
  }
  return out;
}

/// Recounts regions. With a threshold only regions scoring at least it are
/// emitted; otherwise every region is.
inline std::vector<RecountRecord> recount(const TrainedModel& m, const FeaturePack& pack,
                                          RecountMode mode = RecountMode::single,
                                          std::optional<double> threshold = std::nullopt) {
  detail::check_pack_matches(m, pack);
  if (pack.manifest.tasks.size() != m.recount.tasks.size())
    fail_validation("pack has ", pack.manifest.tasks.size(), " concept tasks, model has ", m.recount.tasks.size());
  for (std::size_t t = 0; t < m.recount.tasks.size(); ++t)
    if (pack.manifest.tasks[t].name != m.recount.tasks[t].name ||
        pack.manifest.tasks[t].categories != m.recount.tasks[t].categories)
      fail_validation("pack task '", pack.manifest.tasks[t].name, "' does not match model task '",
                      m.recount.tasks[t].name, "'");
  std::vector<RecountRecord> out;
  for (const auto& d : detect(m, pack)) {
    if (threshold && !(d.score >= *threshold)) continue;
    auto rec = recount_region(m.recount, pack, d.record, mode);
    rec.detection_score = d.score;
    rec.untrained_cell = d.untrained_cell;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace aed
