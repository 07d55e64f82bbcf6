#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hazekit/haze.hpp"
#include "hazekit/image.hpp"
#include "hazekit/rng.hpp"
#include "hazekit/scene.hpp"

namespace hazekit {

inline constexpr int kManifestSchemaVersion = 1;

struct SceneRecord {
  std::string clear_file;
  std::string depth_file;
  std::string hazy_file;
  std::uint64_t seed = 0;
  std::array<double, 3> airlight{};
  double beta = 0.0;
  std::string split;  // "train" or "test"
  std::uint32_t crc_clear = 0;
  std::uint32_t crc_depth = 0;
  std::uint32_t crc_hazy = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  int schema_version = kManifestSchemaVersion;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<SceneRecord> records;

  std::vector<std::size_t> split_indices(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].split == split) out.push_back(i);
    }
    return out;
  }
};

struct ScenePair {
  Image clear;
  Grid depth;
  Image hazy;
  HazeParams params;
  std::uint64_t seed = 0;
};

namespace dataset_detail {

inline constexpr std::uint64_t kTagParams = 1;
inline constexpr std::uint64_t kTagSplit = 2;
inline constexpr std::uint64_t kTagSceneBase = 16;

inline std::string indexed_name(const char* stem, std::size_t i,
                                const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05zu.%s", stem, i, ext);
  return std::string(buf);
}

/// Depth values are stored as 32-bit floats; snap before synthesis so a
/// regenerated hazy image matches the stored one up to quantization only.
inline void snap_to_f32(Grid& g) {
  for (double& d : g.v) d = static_cast<double>(static_cast<float>(d));
}

}  // namespace dataset_detail

inline void write_manifest(const DatasetManifest& m,
                           const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema_version"] = m.schema_version;
  j["height"] = m.height;
  j["width"] = m.width;
  j["records"] = nlohmann::json::array();
  for (const auto& r : m.records) {
    nlohmann::json rec;
    rec["clear"] = r.clear_file;
    rec["depth"] = r.depth_file;
    rec["hazy"] = r.hazy_file;
    rec["seed"] = r.seed;
    rec["airlight"] = {r.airlight[0], r.airlight[1], r.airlight[2]};
    rec["beta"] = r.beta;
    rec["split"] = r.split;
    rec["crc"] = {{"clear", r.crc_clear},
                  {"depth", r.crc_depth},
                  {"hazy", r.crc_hazy}};
    j["records"].push_back(std::move(rec));
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("write_manifest: cannot write " + path.string());
  }
  os << j.dump(2) << '\n';
  if (!os) {
    throw std::runtime_error("write_manifest: cannot write " + path.string());
  }
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("load_manifest: cannot open " + path.string());
  }
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_manifest: " + path.string() + ": " +
                             e.what());
  }
  DatasetManifest m;
  m.root = path.parent_path();
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != kManifestSchemaVersion) {
    throw std::runtime_error(
        "load_manifest: schema version " + std::to_string(m.schema_version) +
        " unsupported (expected " + std::to_string(kManifestSchemaVersion) +
        ")");
  }
  m.height = j.at("height").get<std::size_t>();
  m.width = j.at("width").get<std::size_t>();
  for (const auto& rec : j.at("records")) {
    SceneRecord r;
    r.clear_file = rec.at("clear").get<std::string>();
    r.depth_file = rec.at("depth").get<std::string>();
    r.hazy_file = rec.at("hazy").get<std::string>();
    r.seed = rec.at("seed").get<std::uint64_t>();
    const auto& a = rec.at("airlight");
    r.airlight = {a.at(0).get<double>(), a.at(1).get<double>(),
                  a.at(2).get<double>()};
    r.beta = rec.at("beta").get<double>();
    r.split = rec.at("split").get<std::string>();
    r.crc_clear = rec.at("crc").at("clear").get<std::uint32_t>();
    r.crc_depth = rec.at("crc").at("depth").get<std::uint32_t>();
    r.crc_hazy = rec.at("crc").at("hazy").get<std::uint32_t>();
    m.records.push_back(std::move(r));
  }
  return m;
}

/// Generates `count` scene pairs under `out_root`, synthesizes their hazy
/// counterparts, assigns a random 3:1 train/test split, and writes
/// manifest.json. Everything is a pure function of (count, seed, size).
inline DatasetManifest build_dataset(std::size_t count, std::uint64_t seed,
                                     std::size_t size,
                                     const std::filesystem::path& out_root) {
  if (count < 8) {
    throw std::invalid_argument("build_dataset: count must be at least 8, "
                                "got " +
                                std::to_string(count));
  }
  std::error_code ec;
  std::filesystem::create_directories(out_root, ec);
  if (ec || !std::filesystem::is_directory(out_root)) {
    throw std::runtime_error("build_dataset: cannot create output directory " +
                             out_root.string());
  }

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream split_rs(derive_seed(seed, dataset_detail::kTagSplit));
  split_rs.shuffle(order);
  const std::size_t n_train = count * 3 / 4;
  std::vector<std::string> split(count, "test");
  for (std::size_t i = 0; i < n_train; ++i) split[order[i]] = "train";

  RandomStream param_rs(derive_seed(seed, dataset_detail::kTagParams));
  DatasetManifest m;
  m.root = out_root;
  m.height = size;
  m.width = size;

  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t scene_seed =
        derive_seed(seed, dataset_detail::kTagSceneBase + i);
    Scene sc = generate_scene(scene_seed, size, size);
    dataset_detail::snap_to_f32(sc.depth);
    const Image clear = quantize8(sc.clear);
    const HazeParams hp = sample_haze_params(param_rs);
    const Grid t = transmission(sc.depth, hp.beta);
    const Image hazy = quantize8(apply_haze(clear, t, hp.airlight));

    SceneRecord r;
    r.clear_file = dataset_detail::indexed_name("clear", i, "png");
    r.depth_file = dataset_detail::indexed_name("depth", i, "hzdm");
    r.hazy_file = dataset_detail::indexed_name("hazy", i, "png");
    r.seed = scene_seed;
    r.airlight = hp.airlight;
    r.beta = hp.beta;
    r.split = split[i];
    write_png(out_root / r.clear_file, clear);
    write_hzdm(out_root / r.depth_file, sc.depth);
    write_png(out_root / r.hazy_file, hazy);
    r.crc_clear = file_crc32(out_root / r.clear_file);
    r.crc_depth = file_crc32(out_root / r.depth_file);
    r.crc_hazy = file_crc32(out_root / r.hazy_file);
    m.records.push_back(std::move(r));
  }

  write_manifest(m, out_root / "manifest.json");
  return m;
}

/// Loads one record with checksum and shape validation.
inline ScenePair load_pair(const DatasetManifest& m, std::size_t idx) {
  if (idx >= m.records.size()) {
    throw std::out_of_range("load_pair: record " + std::to_string(idx) +
                            " out of range");
  }
  const SceneRecord& r = m.records[idx];
  auto check = [&](const std::string& file, std::uint32_t want) {
    const auto path = m.root / file;
    if (!std::filesystem::exists(path)) {
      throw std::runtime_error("load_pair: record '" + r.clear_file +
                               "': missing file " + path.string());
    }
    const std::uint32_t got = file_crc32(path);
    if (got != want) {
      throw std::runtime_error("load_pair: record '" + file +
                               "': checksum mismatch (manifest " +
                               std::to_string(want) + ", file " +
                               std::to_string(got) + ")");
    }
  };
  check(r.clear_file, r.crc_clear);
  check(r.depth_file, r.crc_depth);
  check(r.hazy_file, r.crc_hazy);

  ScenePair p;
  p.clear = read_png(m.root / r.clear_file);
  p.depth = read_hzdm(m.root / r.depth_file);
  p.hazy = read_png(m.root / r.hazy_file);
  p.params.airlight = r.airlight;
  p.params.beta = r.beta;
  p.seed = r.seed;
  auto shape_ok = [&](std::size_t h, std::size_t w) {
    return h == m.height && w == m.width;
  };
  if (!shape_ok(p.clear.h, p.clear.w) || !shape_ok(p.depth.h, p.depth.w) ||
      !shape_ok(p.hazy.h, p.hazy.w)) {
    throw std::runtime_error("load_pair: record '" + r.clear_file +
                             "': shape mismatch against manifest " +
                             std::to_string(m.height) + "x" +
                             std::to_string(m.width));
  }
  return p;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  RandomStream rs(seed);
  rs.shuffle(idx);
  return idx;
}

}  // namespace hazekit
