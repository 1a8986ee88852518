#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "affmatch/binio.hpp"
#include "affmatch/errors.hpp"
#include "affmatch/geometry.hpp"
#include "affmatch/sample.hpp"

namespace affmatch {

// On-disk formats (all integers and doubles little-endian):
//
// Scene file (.scene):
//   magic "AFMSCENE" | u32 version | u64 point_count | u64 region_count
//   point_count * 9 f64   (x y z r g b nx ny nz)
//   per region: u32 action_descriptor_id | u8 gt_affordance_flag
//             | u64 count | count * u32 point indices
//
// Signifier sidecar (.sig):
//   magic "AFMSIGNF" | u32 version | u64 row_count | u64 width
//   row_count * width f64 | row_count * u32 ground-truth region index
//
// Action sidecar (actions.txt): one "<id> <name>" line per action.
//
// Region masks are not stored; loaders rebuild them by rasterizing each
// region's points onto the scene grid, which keeps the mask invariant
// (every region point occupies a set voxel) true by construction.

inline constexpr char kSceneMagic[8] = {'A', 'F', 'M', 'S', 'C', 'E', 'N', 'E'};
inline constexpr char kSignifierMagic[8] = {'A', 'F', 'M', 'S', 'I', 'G', 'N', 'F'};
inline constexpr std::uint32_t kSceneVersion = 1;

struct SceneData {
  ScenePointCloud cloud;
  std::vector<CandidateRegion> regions;
  std::vector<std::uint8_t> gt_flags;  // per region
};

inline void write_scene(const std::string& path, const ScenePointCloud& cloud,
                        const std::vector<CandidateRegion>& regions,
                        const std::vector<std::uint8_t>& gt_flags) {
  if (gt_flags.size() != regions.size())
    throw ShapeError("write_scene: " + std::to_string(gt_flags.size()) + " flags for " +
                     std::to_string(regions.size()) + " regions");
  BufWriter w;
  w.bytes(kSceneMagic, 8);
  w.u32(kSceneVersion);
  w.u64(cloud.size());
  w.u64(regions.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (double v : cloud.points[i]) w.f64(v);
    for (double v : cloud.features[i]) w.f64(v);
  }
  for (std::size_t r = 0; r < regions.size(); ++r) {
    w.u32(regions[r].action_descriptor_id);
    w.u8(gt_flags[r]);
    w.u64(regions[r].region_points.size());
    for (std::uint32_t idx : regions[r].region_points) w.u32(idx);
  }
  w.write_file(path);
}

inline SceneData read_scene(const std::string& path) {
  BufReader r = BufReader::read_file(path);
  if (r.str(8) != std::string(kSceneMagic, 8)) throw IoError("scene: bad magic: " + path);
  if (r.u32() != kSceneVersion) throw IoError("scene: unsupported version: " + path);
  const std::uint64_t n_points = r.u64();
  const std::uint64_t n_regions = r.u64();
  SceneData out;
  out.cloud.points.resize(n_points);
  out.cloud.features.resize(n_points);
  for (std::uint64_t i = 0; i < n_points; ++i) {
    for (auto& v : out.cloud.points[i]) v = r.f64();
    for (auto& v : out.cloud.features[i]) v = r.f64();
  }
  validate_cloud(out.cloud);
  const GridSpec grid = scene_grid(out.cloud);
  for (std::uint64_t reg = 0; reg < n_regions; ++reg) {
    CandidateRegion region;
    region.action_descriptor_id = r.u32();
    out.gt_flags.push_back(r.u8());
    const std::uint64_t count = r.u64();
    if (count == 0) throw EmptyInputError("scene: region " + std::to_string(reg) + " is empty");
    region.region_points.resize(count);
    for (auto& idx : region.region_points) idx = r.u32();
    region.mask = rasterize(out.cloud, region.region_points, grid);
    out.regions.push_back(std::move(region));
  }
  if (!r.at_end()) throw IoError("scene: trailing bytes: " + path);
  return out;
}

inline void write_signifiers(const std::string& path, const SignifierFeatures& feats,
                             const std::vector<std::uint32_t>& gt_region) {
  feats.validate();
  if (gt_region.size() != feats.count)
    throw ShapeError("write_signifiers: " + std::to_string(gt_region.size()) +
                     " ground-truth rows for " + std::to_string(feats.count) + " signifiers");
  BufWriter w;
  w.bytes(kSignifierMagic, 8);
  w.u32(kSceneVersion);
  w.u64(feats.count);
  w.u64(feats.width);
  for (double v : feats.values) w.f64(v);
  for (std::uint32_t g : gt_region) w.u32(g);
  w.write_file(path);
}

inline std::pair<SignifierFeatures, std::vector<std::uint32_t>> read_signifiers(
    const std::string& path) {
  BufReader r = BufReader::read_file(path);
  if (r.str(8) != std::string(kSignifierMagic, 8))
    throw IoError("signifiers: bad magic: " + path);
  if (r.u32() != kSceneVersion) throw IoError("signifiers: unsupported version: " + path);
  SignifierFeatures feats;
  feats.count = r.u64();
  feats.width = r.u64();
  feats.values.resize(feats.count * feats.width);
  for (auto& v : feats.values) v = r.f64();
  std::vector<std::uint32_t> gt(feats.count);
  for (auto& g : gt) g = r.u32();
  if (!r.at_end()) throw IoError("signifiers: trailing bytes: " + path);
  feats.validate();
  return {std::move(feats), std::move(gt)};
}

inline void write_actions(const std::string& path, const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < names.size(); ++i) out << i << " " << names[i] << "\n";
}

inline std::vector<std::string> read_actions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::map<std::size_t, std::string> by_id;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::size_t id;
    std::string name;
    if (!(ss >> id >> name)) throw IoError("actions: malformed line: " + line);
    by_id[id] = name;
  }
  std::vector<std::string> names;
  for (auto& [id, name] : by_id) {
    if (id != names.size()) throw IoError("actions: ids are not dense");
    names.push_back(name);
  }
  return names;
}

// Scene + sidecar as one matching problem. `scene_path` must end in .scene;
// the signifier sidecar is the sibling .sig file.
inline Sample load_sample(const std::string& scene_path) {
  SceneData scene = read_scene(scene_path);
  std::string sig_path = scene_path;
  const auto dot = sig_path.rfind(".scene");
  if (dot == std::string::npos) throw IoError("load_sample: expected .scene path: " + scene_path);
  sig_path.replace(dot, std::string::npos, ".sig");
  auto [feats, gt] = read_signifiers(sig_path);
  Sample s;
  s.cloud = std::move(scene.cloud);
  s.regions = std::move(scene.regions);
  s.signifiers = std::move(feats);
  s.gt_region = std::move(gt);
  s.grid = scene_grid(s.cloud);
  s.validate();
  return s;
}

inline void save_sample(const std::string& dir, std::size_t index, const Sample& sample) {
  char name[32];
  std::snprintf(name, sizeof(name), "scene_%05zu", index);
  std::vector<std::uint8_t> flags(sample.regions.size(), 0);
  for (std::uint32_t g : sample.gt_region) flags[g] = 1;
  const std::string base = (std::filesystem::path(dir) / name).string();
  write_scene(base + ".scene", sample.cloud, sample.regions, flags);
  write_signifiers(base + ".sig", sample.signifiers, sample.gt_region);
}

// Sorted .scene files under dir (deterministic dataset order).
inline std::vector<std::string> list_scene_files(const std::string& dir) {
  std::vector<std::string> files;
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir);
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".scene")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<Sample> load_dataset(const std::string& dir) {
  std::vector<Sample> samples;
  for (const auto& path : list_scene_files(dir)) samples.push_back(load_sample(path));
  if (samples.empty()) throw EmptyInputError("no .scene files under " + dir);
  return samples;
}

}  // namespace affmatch
