#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <functional>

#include "aed/feature_pack.hpp"
#include "test_util.hpp"

using namespace aed;
using testutil::TempDir;
using testutil::tiny_pack;

namespace {

std::string validation_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(FeaturePack, SingleRecordFeatureFileIsSixteenLittleEndianBytes) {
  FeaturePack p = tiny_pack(1, 4);
  p.features = MatrixF(1, 4, std::vector<float>{1, 2, 3, 4});
  TempDir dir;
  write_pack(p, dir.path());
  const auto bytes = read_file_bytes(dir / "features.bin");
  ASSERT_EQ(bytes.size(), 16u);
  const unsigned char one_le[] = {0x00, 0x00, 0x80, 0x3f};  // 1.0f
  const unsigned char four_le[] = {0x00, 0x00, 0x80, 0x40};  // 4.0f
  EXPECT_EQ(std::memcmp(bytes.data(), one_le, 4), 0);
  EXPECT_EQ(std::memcmp(bytes.data() + 12, four_le, 4), 0);
}

TEST(FeaturePack, EmptyRecordSetIsValid) {
  FeaturePack p = tiny_pack(0, 4);
  TempDir dir;
  write_pack(p, dir.path());
  const auto back = read_pack(dir.path());
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back.feature_dim(), 4u);
  EXPECT_EQ(std::filesystem::file_size(dir / "features.bin"), 0u);
}

TEST(FeaturePack, LargeMatrixRoundTripIsBitExact) {
  FeaturePack p = tiny_pack(100, 4096, 42);
  TempDir dir;
  write_pack(p, dir.path());
  const auto back = read_pack(dir.path());
  ASSERT_EQ(back.features.rows(), 100u);
  ASSERT_EQ(back.features.cols(), 4096u);
  EXPECT_EQ(std::memcmp(back.features.data().data(), p.features.data().data(), 100 * 4096 * sizeof(float)), 0);
  EXPECT_EQ(back.scores, p.scores);
  EXPECT_EQ(back.records, p.records);
  // Second write produces identical bytes.
  TempDir again;
  write_pack(back, again.path());
  EXPECT_EQ(read_file_bytes(dir / "features.bin"), read_file_bytes(again / "features.bin"));
  EXPECT_EQ(read_file_bytes(dir / "scores_object.bin"), read_file_bytes(again / "scores_object.bin"));
}

TEST(FeaturePack, TruncatedFeatureFileNamesBothSizes) {
  FeaturePack p = tiny_pack(3, 4);
  TempDir dir;
  write_pack(p, dir.path());
  auto bytes = read_file_bytes(dir / "features.bin");
  bytes.pop_back();
  write_file_bytes(dir / "features.bin", bytes);
  const auto msg = validation_message([&] { read_pack(dir.path()); });
  EXPECT_NE(msg.find("48"), std::string::npos) << msg;
  EXPECT_NE(msg.find("47"), std::string::npos) << msg;
}

TEST(FeaturePack, ScoreOutsideUnitIntervalCitesRecord) {
  FeaturePack p = tiny_pack(4, 4);
  p.scores[0](2, 1) = 1.5f;
  const auto msg = validation_message([&] { validate_pack(p); });
  EXPECT_NE(msg.find("record 2"), std::string::npos) << msg;
  TempDir dir;
  EXPECT_THROW(write_pack(p, dir.path()), ValidationError);
}

TEST(FeaturePack, ScoresWithinSlackAreClampedOnWrite) {
  FeaturePack p = tiny_pack(2, 4);
  p.scores[0](0, 0) = 1.0f + 5e-7f;
  p.scores[0](1, 1) = -5e-7f;
  TempDir dir;
  write_pack(p, dir.path());
  const auto back = read_pack(dir.path());
  EXPECT_EQ(back.scores[0](0, 0), 1.0f);
  EXPECT_EQ(back.scores[0](1, 1), 0.0f);
}

TEST(FeaturePack, ValidPackMatchesManifest) {
  FeaturePack p = tiny_pack(5, 7);
  TempDir dir;
  write_pack(p, dir.path());
  const auto back = read_pack(dir.path());
  EXPECT_EQ(back.size(), 5u);
  EXPECT_EQ(back.feature_dim(), 7u);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "records.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "scores_object.bin"));
}

TEST(FeaturePack, MissingFileAndVersionMismatchAreRejected) {
  FeaturePack p = tiny_pack(2, 4);
  TempDir dir;
  write_pack(p, dir.path());
  std::filesystem::remove(dir / "scores_object.bin");
  EXPECT_THROW(read_pack(dir.path()), ValidationError);

  TempDir other;
  write_pack(p, other.path());
  auto manifest = detail::parse_json_file(other / "manifest.json");
  manifest["version"] = 99;
  std::ofstream(other / "manifest.json") << manifest.dump();
  const auto msg = validation_message([&] { read_pack(other.path()); });
  EXPECT_NE(msg.find("version"), std::string::npos) << msg;
}

TEST(FeaturePack, DuplicateRecordsWarnButPass) {
  FeaturePack p = tiny_pack(2, 4);
  p.records[1] = p.records[0];
  const auto warnings = validate_pack(p);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("duplicate"), std::string::npos);
}

TEST(FeaturePack, LabelsRoundTrip) {
  FeaturePack p = tiny_pack(3, 4);
  GroundTruth gt;
  std::vector<std::uint8_t> bits(320 * 240, 0);
  for (int y = 10; y < 20; ++y)
    for (int x = 5; x < 50; ++x) bits[y * 320 + x] = 1;
  gt.frames.push_back({"v0", 0, true, RleMask::encode(320, 240, bits)});
  gt.frames.push_back({"v0", 1, false, std::nullopt});
  gt.regions.push_back({0, true, {{"object", {"b"}}}});
  gt.regions.push_back({1, false, {{"object", {"a", "b"}}}});
  p.labels = gt;
  TempDir dir;
  write_pack(p, dir.path());
  const auto back = read_pack(dir.path());
  ASSERT_TRUE(back.labels);
  ASSERT_EQ(back.labels->frames.size(), 2u);
  ASSERT_TRUE(back.labels->frames[0].mask);
  EXPECT_EQ(back.labels->frames[0].mask->decode(), bits);
  EXPECT_FALSE(back.labels->frames[1].mask);
  ASSERT_EQ(back.labels->regions.size(), 2u);
  EXPECT_TRUE(back.labels->regions[0].abnormal);
  EXPECT_EQ(back.labels->regions[1].categories.at("object"), (std::vector<std::string>{"a", "b"}));
}

TEST(FeaturePack, RleStartsWithZeroRun) {
  const std::vector<std::uint8_t> bits = {1, 1, 0, 1};
  const auto m = RleMask::encode(2, 2, bits);
  EXPECT_EQ(m.counts, (std::vector<std::uint32_t>{0, 2, 1, 1}));
  EXPECT_EQ(m.decode(), bits);
}

// Every constructed violation is rejected.
TEST(FeaturePack, MutatedPacksAreRejected) {
  const FeaturePack base = tiny_pack(4, 3);
  ASSERT_NO_THROW(validate_pack(base));
  std::vector<std::pair<std::string, std::function<void(FeaturePack&)>>> mutations = {
      {"nan feature", [](FeaturePack& p) { p.features(1, 0) = std::numeric_limits<float>::quiet_NaN(); }},
      {"inf feature", [](FeaturePack& p) { p.features(0, 2) = std::numeric_limits<float>::infinity(); }},
      {"nan score", [](FeaturePack& p) { p.scores[0](3, 0) = std::numeric_limits<float>::quiet_NaN(); }},
      {"negative score", [](FeaturePack& p) { p.scores[0](3, 0) = -0.5f; }},
      {"zero width", [](FeaturePack& p) { p.records[0].box.w = 0; }},
      {"negative height", [](FeaturePack& p) { p.records[0].box.h = -1; }},
      {"box past right edge", [](FeaturePack& p) { p.records[0].box.x = 300; }},
      {"box past bottom edge", [](FeaturePack& p) { p.records[0].box.y = 210; }},
      {"negative x", [](FeaturePack& p) { p.records[0].box.x = -1; }},
      {"feature offset", [](FeaturePack& p) { p.records[2].feature_offset = 4; }},
      {"score offset", [](FeaturePack& p) { p.records[2].score_offsets[0] = 9; }},
      {"missing score offset", [](FeaturePack& p) { p.records[2].score_offsets.clear(); }},
      {"unknown video", [](FeaturePack& p) { p.records[1].video_id = "nope"; }},
      {"record count", [](FeaturePack& p) { p.manifest.record_count = 5; }},
      {"feature dim", [](FeaturePack& p) { p.manifest.feature_dim = 4; }},
      {"score columns", [](FeaturePack& p) { p.manifest.tasks[0].categories.push_back("c"); }},
      {"duplicate category", [](FeaturePack& p) { p.manifest.tasks[0].categories[1] = "a"; }},
      {"no tasks", [](FeaturePack& p) { p.manifest.tasks.clear(); p.scores.clear(); }},
      {"frame index", [](FeaturePack& p) { p.records[0].frame_index = 100; }},
      {"label record", [](FeaturePack& p) { p.labels = GroundTruth{{}, {{10, true, {}}}}; }},
      {"label category", [](FeaturePack& p) { p.labels = GroundTruth{{}, {{0, true, {{"object", {"zzz"}}}}}}; }},
      {"mask size", [](FeaturePack& p) {
         p.labels = GroundTruth{{{"v0", 0, true, RleMask{2, 2, {4}}}}, {}};
       }},
  };
  for (const auto& [name, mutate] : mutations) {
    FeaturePack p = base;
    mutate(p);
    EXPECT_THROW(validate_pack(p), ValidationError) << name;
  }
}
