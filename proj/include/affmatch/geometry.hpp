#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "affmatch/errors.hpp"

namespace affmatch {

// Point cloud with per-point xyz plus 6 feature channels (rgb + unit normal).
struct ScenePointCloud {
  std::vector<std::array<double, 3>> points;
  std::vector<std::array<double, 6>> features;  // r, g, b, nx, ny, nz

  std::size_t size() const { return points.size(); }
};

inline void validate_cloud(const ScenePointCloud& cloud) {
  if (cloud.points.size() != cloud.features.size())
    throw ShapeError("cloud: " + std::to_string(cloud.points.size()) + " points vs " +
                     std::to_string(cloud.features.size()) + " feature rows");
  for (std::size_t i = 0; i < cloud.features.size(); ++i) {
    const auto& f = cloud.features[i];
    for (int k = 0; k < 3; ++k)
      if (f[k] < 0.0 || f[k] > 1.0)
        throw ContractError("cloud: rgb out of [0,1] at point " + std::to_string(i));
    const double n = std::sqrt(f[3] * f[3] + f[4] * f[4] + f[5] * f[5]);
    if (std::abs(n - 1.0) > 1e-6)
      throw ContractError("cloud: normal not unit length at point " + std::to_string(i));
  }
}

// Axis-aligned cubic voxel grid: extent^3 cells of side voxel_size starting
// at origin. Linear cell index is lexicographic in (ix, iy, iz).
struct GridSpec {
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  double voxel_size = 1.0;
  std::uint32_t extent = 64;

  bool operator==(const GridSpec&) const = default;

  std::size_t cell_count() const {
    return static_cast<std::size_t>(extent) * extent * extent;
  }

  std::size_t linear(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) const {
    return (static_cast<std::size_t>(ix) * extent + iy) * extent + iz;
  }

  // Cell of a point. Cells are half-open along each axis; a point exactly on
  // the grid's far face is assigned to the last (lower-index) cell so the
  // closed bounding cube maps onto the grid. Throws when outside.
  std::array<std::uint32_t, 3> cell_of(const std::array<double, 3>& p) const {
    std::array<std::uint32_t, 3> cell{};
    for (int a = 0; a < 3; ++a) {
      const double t = (p[a] - origin[a]) / voxel_size;
      double f = std::floor(t);
      if (f == static_cast<double>(extent) && t <= extent * (1.0 + 1e-12)) f -= 1.0;
      if (f < 0.0 || f >= static_cast<double>(extent))
        throw OutOfBoundsError("point (" + std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                               ", " + std::to_string(p[2]) + ") outside grid");
      cell[a] = static_cast<std::uint32_t>(f);
    }
    return cell;
  }
};

// Occupancy bitset over a grid.
class VoxelMask {
 public:
  VoxelMask() : VoxelMask(GridSpec{}) {}

  explicit VoxelMask(const GridSpec& grid)
      : grid_(grid), words_((grid.cell_count() + 63) / 64, 0) {}

  const GridSpec& grid() const { return grid_; }

  void set(std::size_t idx) { words_[idx >> 6] |= std::uint64_t{1} << (idx & 63); }

  bool test(std::size_t idx) const {
    return (words_[idx >> 6] >> (idx & 63)) & 1;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (std::uint64_t w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  bool any() const {
    for (std::uint64_t w : words_)
      if (w) return true;
    return false;
  }

  const std::vector<std::uint64_t>& words() const { return words_; }

  bool operator==(const VoxelMask&) const = default;

 private:
  GridSpec grid_;
  std::vector<std::uint64_t> words_;
};

// Candidate region: a subset of a parent cloud's points plus its occupancy
// mask and the id of the action descriptor attached to it.
struct CandidateRegion {
  VoxelMask mask;
  std::vector<std::uint32_t> region_points;  // indices into the parent cloud
  std::uint32_t action_descriptor_id = 0;
};

// Occupancy of a point subset on the given grid. Every point must fall
// inside the grid (see GridSpec::cell_of for the boundary rule).
inline VoxelMask rasterize(const ScenePointCloud& cloud,
                           const std::vector<std::uint32_t>& subset, const GridSpec& grid) {
  VoxelMask mask(grid);
  for (std::uint32_t idx : subset) {
    if (idx >= cloud.size())
      throw OutOfBoundsError("rasterize: point index " + std::to_string(idx) + " out of " +
                             std::to_string(cloud.size()));
    const auto cell = grid.cell_of(cloud.points[idx]);
    mask.set(grid.linear(cell[0], cell[1], cell[2]));
  }
  return mask;
}

// Intersection-over-union of two masks on the same grid. Two empty masks are
// defined to have IoU 1 (nothing missing, nothing spurious).
inline double voxel_iou(const VoxelMask& a, const VoxelMask& b) {
  if (!(a.grid() == b.grid())) throw GridError("voxel_iou: masks live on different grids");
  std::size_t inter = 0, uni = 0;
  const auto& wa = a.words();
  const auto& wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) {
    inter += static_cast<std::size_t>(std::popcount(wa[i] & wb[i]));
    uni += static_cast<std::size_t>(std::popcount(wa[i] | wb[i]));
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Grid that wraps a scene: origin at the bounding-box minimum, cubic cells
// sized so the longest bounding-box edge spans `extent` cells.
inline GridSpec scene_grid(const ScenePointCloud& cloud, std::uint32_t extent = 64) {
  if (cloud.points.empty()) throw EmptyInputError("scene_grid: empty cloud");
  std::array<double, 3> lo = cloud.points[0], hi = cloud.points[0];
  for (const auto& p : cloud.points)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  double side = 0.0;
  for (int a = 0; a < 3; ++a) side = std::max(side, hi[a] - lo[a]);
  side = std::max(side, 1e-9);  // degenerate single-point scenes
  return GridSpec{lo, side / extent, extent};
}

// Voxel-grid downsampling. Cells are anchored at the world origin
// (cell = floor(p / voxel_size)), which makes the op exactly idempotent: the
// centroid of a cell's members stays inside that cell. Each surviving cell
// contributes one representative point: the member centroid, the mean rgb,
// and the renormalized mean normal. When the number of occupied cells
// exceeds target_count, the cells with the most members survive; ties break
// toward the lexicographically smaller cell index. Output points are ordered
// by cell index.
inline ScenePointCloud voxel_downsample(const ScenePointCloud& cloud, double voxel_size,
                                        std::size_t target_count) {
  if (cloud.points.empty()) throw EmptyInputError("voxel_downsample: empty cloud");
  if (voxel_size <= 0.0) throw ConfigError("voxel_downsample: voxel_size must be positive");
  if (target_count == 0) throw ConfigError("voxel_downsample: target_count must be positive");
  validate_cloud(cloud);

  struct Acc {
    std::size_t count = 0;
    std::array<double, 3> xyz{0, 0, 0};
    std::array<double, 6> feat{0, 0, 0, 0, 0, 0};
    std::size_t first_member = 0;
  };
  using Key = std::array<std::int64_t, 3>;
  std::map<Key, Acc> cells;  // ordered -> lexicographic cell order for free
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Key key;
    for (int a = 0; a < 3; ++a)
      key[a] = static_cast<std::int64_t>(std::floor(cloud.points[i][a] / voxel_size));
    Acc& acc = cells[key];
    if (acc.count == 0) acc.first_member = i;
    acc.count += 1;
    for (int a = 0; a < 3; ++a) acc.xyz[a] += cloud.points[i][a];
    for (int a = 0; a < 6; ++a) acc.feat[a] += cloud.features[i][a];
  }

  std::vector<const std::pair<const Key, Acc>*> keep;
  keep.reserve(cells.size());
  for (const auto& kv : cells) keep.push_back(&kv);
  if (keep.size() > target_count) {
    // Most-populated cells win; the map order already breaks count ties by
    // lexicographic cell index, and stable_sort preserves it.
    std::stable_sort(keep.begin(), keep.end(),
                     [](const auto* a, const auto* b) { return a->second.count > b->second.count; });
    keep.resize(target_count);
    std::sort(keep.begin(), keep.end(),
              [](const auto* a, const auto* b) { return a->first < b->first; });
  }

  ScenePointCloud out;
  out.points.reserve(keep.size());
  out.features.reserve(keep.size());
  for (const auto* kv : keep) {
    const Acc& acc = kv->second;
    if (acc.count == 1) {
      // Single member: copy verbatim so repeated application is bitwise stable.
      out.points.push_back(cloud.points[acc.first_member]);
      out.features.push_back(cloud.features[acc.first_member]);
      continue;
    }
    const double inv = 1.0 / static_cast<double>(acc.count);
    std::array<double, 3> p{acc.xyz[0] * inv, acc.xyz[1] * inv, acc.xyz[2] * inv};
    std::array<double, 6> f{acc.feat[0] * inv, acc.feat[1] * inv, acc.feat[2] * inv,
                            acc.feat[3] * inv, acc.feat[4] * inv, acc.feat[5] * inv};
    const double n = std::sqrt(f[3] * f[3] + f[4] * f[4] + f[5] * f[5]);
    if (n < 1e-12) {
      f[3] = 0.0;
      f[4] = 0.0;
      f[5] = 1.0;  // opposing normals cancelled; pick a fixed fallback
    } else {
      f[3] /= n;
      f[4] /= n;
      f[5] /= n;
    }
    out.points.push_back(p);
    out.features.push_back(f);
  }
  return out;
}

}  // namespace affmatch
