#include <gtest/gtest.h>

#include <cmath>

#include "aed/evaluation.hpp"
#include "aed/gridbank.hpp"
#include "aed/synthbench.hpp"
#include "test_util.hpp"

using namespace aed;
using testutil::TempDir;

namespace {

SynthConfig small() {
  SynthConfig c;
  c.train_frames = 50;
  c.test_frames = 50;
  return c;
}

std::vector<std::string> pack_files(const std::filesystem::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

TEST(Synth, SameSeedGivesByteIdenticalPacks) {
  auto cfg = small();
  cfg.seed = 17;
  TempDir a, b;
  write_pack(generate(cfg), a.path());
  write_pack(generate(cfg), b.path());
  const auto files = pack_files(a.path());
  ASSERT_EQ(files, pack_files(b.path()));
  for (const auto& f : files) EXPECT_EQ(read_file_bytes(a / f), read_file_bytes(b / f)) << f;
  cfg.seed = 18;
  TempDir c;
  write_pack(generate(cfg), c.path());
  EXPECT_NE(read_file_bytes(a / "features.bin"), read_file_bytes(c / "features.bin"));
}

TEST(Synth, InvalidConfigsRejected) {
  auto cfg = small();
  cfg.anomaly_fraction = 0.0;
  EXPECT_THROW(generate(cfg), ValidationError);
  cfg.anomaly_fraction = 0.5;
  EXPECT_THROW(generate(cfg), ValidationError);
  cfg = small();
  cfg.displacement = 0.0;
  EXPECT_THROW(generate(cfg), ValidationError);
  cfg = small();
  cfg.latent_dim = 100;
  EXPECT_THROW(generate(cfg), ValidationError);
}

TEST(Synth, AnomalyFractionOnTenThousandRegions) {
  auto cfg = small();
  cfg.test_frames = 2500;  // x 4 regions
  const auto pack = generate(cfg);
  ASSERT_EQ(pack.size(), 10000u);
  std::size_t abnormal = 0;
  for (const auto& r : pack.labels->regions) abnormal += r.abnormal;
  EXPECT_NEAR(static_cast<double>(abnormal) / 10000.0, 0.05, 0.005);
}

TEST(Synth, PacksValidateWithoutWarnings) {
  const auto cfg = small();
  EXPECT_TRUE(validate_pack(generate(cfg)).empty());
  EXPECT_TRUE(validate_pack(generate_training(cfg)).empty());
  EXPECT_TRUE(validate_pack(generate_split_fixture(4)).empty());
  const auto train = generate_training(cfg);
  for (const auto& r : train.labels->regions) EXPECT_FALSE(r.abnormal);
}

TEST(Synth, AnomaliesCarryRareScoresAndMasks) {
  const auto cfg = small();
  const auto pack = generate(cfg);
  const auto unseen = cfg.unseen_categories();
  for (const auto& r : pack.labels->regions)
    for (std::size_t t = 0; t < pack.manifest.tasks.size(); ++t) {
      const auto& task = pack.manifest.tasks[t];
      const auto& cat = r.categories.at(task.name)[0];
      const auto& rare = unseen.at(task.name);
      const bool is_rare = std::find(rare.begin(), rare.end(), cat) != rare.end();
      EXPECT_EQ(is_rare, r.abnormal);
      const auto scores = pack.task_scores(t, r.record);
      EXPECT_GE(scores[*task.index_of(cat)], 0.6f);
    }
  for (const auto& f : pack.labels->frames) EXPECT_EQ(f.mask.has_value(), f.abnormal);
}

// Every planted anomaly is cut off from all normal regions of its cell by
// the hyperplane orthogonal to its displacement from the cell mean.
TEST(Synth, AnomaliesLinearlySeparablePerCell) {
  auto cfg = small();
  cfg.test_frames = 300;
  cfg.displacement = 6.0;
  const auto pack = generate(cfg);
  const auto spec = grid_for_pack(pack, cfg.grid_rows, cfg.grid_cols);
  const auto x = pack.feature_matrix();
  std::vector<std::vector<std::size_t>> normals(12), anomalies(12);
  for (std::size_t i = 0; i < pack.size(); ++i) {
    const auto c = assign_cell(spec, pack.records[i].box);
    (pack.labels->for_record(i)->abnormal ? anomalies : normals)[c.row * 4 + c.col].push_back(i);
  }
  std::size_t checked = 0;
  for (std::size_t cell = 0; cell < 12; ++cell) {
    std::vector<double> mean(x.cols(), 0.0);
    for (auto i : normals[cell])
      for (std::size_t d = 0; d < x.cols(); ++d) mean[d] += x(i, d) / normals[cell].size();
    for (auto a : anomalies[cell]) {
      std::vector<double> u(x.cols());
      double norm = 0.0;
      for (std::size_t d = 0; d < x.cols(); ++d) {
        u[d] = x(a, d) - mean[d];
        norm += u[d] * u[d];
      }
      norm = std::sqrt(norm);
      double worst = -kInf;
      for (auto i : normals[cell]) {
        double proj = 0.0;
        for (std::size_t d = 0; d < x.cols(); ++d) proj += (x(i, d) - mean[d]) * u[d] / norm;
        worst = std::max(worst, proj);
      }
      EXPECT_LT(worst, norm);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 60u);
}

TEST(Synth, SplitFixtureAdmitsCleanSplits) {
  for (std::uint64_t fixture_seed = 0; fixture_seed < 3; ++fixture_seed) {
    const auto pack = generate_split_fixture(fixture_seed);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = split_unseen(pack, {"object", seed, 0});
      EXPECT_EQ(unseen_leakage(s.train, "object", s.unseen), 0u);
      EXPECT_TRUE(s.balanced);
    }
  }
}

TEST(Synth, ConfigJsonRoundTrip) {
  auto cfg = small();
  cfg.seed = 99;
  cfg.displacement = 7.5;
  const auto j = to_json(cfg);
  const auto back = synth_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  auto bad = j;
  bad["displacment"] = 3;
  EXPECT_THROW(synth_config_from_json(bad), ValidationError);
}

TEST(Synth, ClusteredGeneratorShape) {
  const auto m = generate_clustered(100, 8, 4, 0.1, 10.0, 1);
  EXPECT_EQ(m.rows(), 100u);
  EXPECT_EQ(m.cols(), 8u);
  EXPECT_EQ(m, generate_clustered(100, 8, 4, 0.1, 10.0, 1));
}
