#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "hazekit/dataset.hpp"
#include "hazekit/scene.hpp"
#include "test_util.hpp"

using namespace hazekit;
using testutil::TempDir;

TEST(GenerateScene, DeterministicInSeed) {
  const Scene a = generate_scene(123, 32, 32);
  const Scene b = generate_scene(123, 32, 32);
  EXPECT_EQ(a.clear.px, b.clear.px);
  EXPECT_EQ(a.depth.v, b.depth.v);
}

TEST(GenerateScene, DepthWithinBounds) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Scene s = generate_scene(seed, 24, 24);
    for (double d : s.depth.v) {
      EXPECT_GT(d, 0.0);
      EXPECT_LE(d, kDepthMax);
    }
    for (double p : s.clear.px) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
  }
}

TEST(GenerateScene, RejectsTooSmall) {
  EXPECT_THROW(generate_scene(1, 15, 32), std::invalid_argument);
  EXPECT_THROW(generate_scene(1, 32, 8), std::invalid_argument);
}

TEST(GenerateScene, HundredSeedsAreDiverse) {
  std::vector<Scene> scenes;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    scenes.push_back(generate_scene(seed, 32, 32));
  }
  for (std::size_t a = 0; a < scenes.size(); ++a) {
    for (std::size_t b = a + 1; b < scenes.size(); ++b) {
      double mad = 0.0;
      const auto& pa = scenes[a].clear.px;
      const auto& pb = scenes[b].clear.px;
      for (std::size_t i = 0; i < pa.size(); ++i) {
        mad += std::abs(pa[i] - pb[i]);
      }
      mad /= static_cast<double>(pa.size());
      EXPECT_GT(mad, 0.02) << "seeds " << a << " and " << b;
    }
  }
}

TEST(BuildDataset, SplitIsThreeToOne) {
  TempDir dir("split");
  const DatasetManifest m = build_dataset(80, 7, 16, dir.path);
  EXPECT_EQ(m.records.size(), 80u);
  EXPECT_EQ(m.split_indices("train").size(), 60u);
  EXPECT_EQ(m.split_indices("test").size(), 20u);
  for (const auto& r : m.records) {
    EXPECT_TRUE(r.split == "train" || r.split == "test");
  }
}

TEST(BuildDataset, TwoThousandImageSplit) {
  TempDir dir("split2000");
  const DatasetManifest m = build_dataset(2000, 3, 16, dir.path);
  EXPECT_EQ(m.split_indices("train").size(), 1500u);
  EXPECT_EQ(m.split_indices("test").size(), 500u);
}

TEST(BuildDataset, DeskScaleBuildCompletesQuickly) {
  TempDir dir("throughput");
  const auto t0 = std::chrono::steady_clock::now();
  build_dataset(80, 7, 32, dir.path);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  EXPECT_LT(secs, 60.0);
}

TEST(BuildDataset, RejectsSmallCount) {
  TempDir dir("small");
  EXPECT_THROW(build_dataset(7, 1, 16, dir.path), std::invalid_argument);
}

TEST(BuildDataset, UnwritablePathNamedInError) {
  try {
    build_dataset(8, 1, 16, "/proc/hazekit_no_such_dir/ds");
    FAIL() << "expected rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/proc/hazekit_no_such_dir"),
              std::string::npos);
  }
}

TEST(BuildDataset, RebuildIsByteIdentical) {
  TempDir a("rebuild_a"), b("rebuild_b");
  const DatasetManifest ma = build_dataset(8, 21, 16, a.path);
  const DatasetManifest mb = build_dataset(8, 21, 16, b.path);
  EXPECT_EQ(testutil::read_file(a.path / "manifest.json"),
            testutil::read_file(b.path / "manifest.json"));
  for (std::size_t i = 0; i < ma.records.size(); ++i) {
    EXPECT_EQ(testutil::read_file(a.path / ma.records[i].clear_file),
              testutil::read_file(b.path / mb.records[i].clear_file));
    EXPECT_EQ(testutil::read_file(a.path / ma.records[i].depth_file),
              testutil::read_file(b.path / mb.records[i].depth_file));
    EXPECT_EQ(testutil::read_file(a.path / ma.records[i].hazy_file),
              testutil::read_file(b.path / mb.records[i].hazy_file));
  }
}

TEST(LoadDataset, ConservesCountAndShapes) {
  TempDir dir("load");
  build_dataset(10, 5, 16, dir.path);
  const DatasetManifest m = load_manifest(dir.path / "manifest.json");
  EXPECT_EQ(m.records.size(), 10u);
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const ScenePair p = load_pair(m, i);
    EXPECT_EQ(p.clear.h, 16u);
    EXPECT_EQ(p.hazy.w, 16u);
    EXPECT_EQ(p.depth.h, 16u);
  }
}

TEST(LoadDataset, HazyImageRegeneratesWithinQuantization) {
  TempDir dir("regen");
  build_dataset(8, 17, 16, dir.path);
  const DatasetManifest m = load_manifest(dir.path / "manifest.json");
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const ScenePair p = load_pair(m, i);
    const Image regen =
        apply_haze(p.clear, transmission(p.depth, p.params.beta),
                   p.params.airlight);
    for (std::size_t k = 0; k < regen.size(); ++k) {
      EXPECT_LE(std::abs(regen.px[k] - p.hazy.px[k]), 1.0 / 255.0 + 1e-9)
          << "record " << i << " component " << k;
    }
  }
}

TEST(LoadDataset, PngRoundTripIsLossless) {
  TempDir dir("png");
  RandomStream rs(3);
  Image img(16, 16, 3);
  for (double& p : img.px) p = rs.uniform01();
  const Image q = quantize8(img);
  write_png(dir.path / "x.png", q);
  const Image back = read_png(dir.path / "x.png");
  EXPECT_EQ(back.px, q.px);
}

TEST(LoadDataset, DepthRoundTripsThroughHzdm) {
  TempDir dir("hzdm");
  Grid g(4, 5);
  RandomStream rs(8);
  for (double& v : g.v) v = static_cast<float>(rs.uniform(0.0, 3.0));
  write_hzdm(dir.path / "d.hzdm", g);
  const Grid back = read_hzdm(dir.path / "d.hzdm");
  EXPECT_EQ(back.h, 4u);
  EXPECT_EQ(back.w, 5u);
  EXPECT_EQ(back.v, g.v);
}

TEST(LoadDataset, ShuffledOrderIsSeededPermutation) {
  const auto a = shuffled_indices(40, 9);
  const auto b = shuffled_indices(40, 9);
  const auto c = shuffled_indices(40, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(LoadDataset, CorruptionIsDetectedAndNamed) {
  TempDir dir("corrupt");
  build_dataset(8, 13, 16, dir.path);
  const DatasetManifest m = load_manifest(dir.path / "manifest.json");
  const auto victim = dir.path / m.records[2].hazy_file;
  std::string bytes = testutil::read_file(victim);
  bytes[bytes.size() / 2] ^= 0x40;
  testutil::write_file(victim, bytes);
  try {
    load_pair(m, 2);
    FAIL() << "expected checksum rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(m.records[2].hazy_file),
              std::string::npos)
        << e.what();
  }
  std::filesystem::remove(victim);
  EXPECT_THROW(load_pair(m, 2), std::runtime_error);
}

TEST(LoadDataset, SchemaVersionMismatchRejected) {
  TempDir dir("schema");
  build_dataset(8, 2, 16, dir.path);
  std::string manifest = testutil::read_file(dir.path / "manifest.json");
  const auto pos = manifest.find("\"schema_version\": 1");
  ASSERT_NE(pos, std::string::npos);
  manifest.replace(pos, std::string("\"schema_version\": 1").size(),
                   "\"schema_version\": 2");
  testutil::write_file(dir.path / "manifest.json", manifest);
  try {
    load_manifest(dir.path / "manifest.json");
    FAIL() << "expected version rejection";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2"), std::string::npos);
    EXPECT_NE(msg.find("1"), std::string::npos);
  }
}

TEST(LoadDataset, TrainAndTestAreDisjointEveryBuild) {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    TempDir dir("disjoint");
    const DatasetManifest m = build_dataset(12, seed, 16, dir.path);
    const auto train = m.split_indices("train");
    const auto test = m.split_indices("test");
    EXPECT_EQ(train.size() + test.size(), m.records.size());
    for (auto t : train) {
      EXPECT_EQ(std::find(test.begin(), test.end(), t), test.end());
    }
  }
}
