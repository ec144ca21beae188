#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "aed/common.hpp"
#include "aed/feature_pack.hpp"
#include "aed/rng.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("aed_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline aed::MatrixD random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double sd = 1.0) {
  aed::Rng rng(seed);
  aed::MatrixD m(n, d);
  for (auto& v : m.data()) v = rng.normal(0.0, sd);
  return m;
}

inline std::vector<std::vector<double>> to_rows(const aed::MatrixD& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
  return rows;
}

/// Small valid pack: one 320x240 video, `n` regions spread over frames,
/// feature dim `d`, one task "object" with categories {a, b}.
inline aed::FeaturePack tiny_pack(std::size_t n = 6, std::size_t d = 4, std::uint64_t seed = 1) {
  aed::Rng rng(seed);
  aed::FeaturePack p;
  p.manifest.feature_dim = d;
  p.manifest.record_count = n;
  p.manifest.videos = {{"v0", 320, 240, n}};
  p.manifest.tasks = {{"object", {"a", "b"}}};
  p.features = aed::MatrixF(n, d);
  for (auto& v : p.features.data()) v = static_cast<float>(rng.normal());
  p.scores = {aed::MatrixF(n, 2)};
  for (auto& v : p.scores[0].data()) v = static_cast<float>(rng.uniform());
  for (std::size_t i = 0; i < n; ++i)
    p.records.push_back({"v0", i, {static_cast<double>((10 * i) % 280), 20.0, 30.0, 40.0}, i, {i}});
  return p;
}

}  // namespace testutil
