#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "affmatch/errors.hpp"
#include "affmatch/geometry.hpp"
#include "affmatch/rng.hpp"
#include "affmatch/sample.hpp"

namespace affmatch {

// Procedural generator of (scene, signifier) pairs with known assignments.
// Matched signifier/region pairs share a latent color code corrupted by
// noise_std; distractor regions draw independent codes, so the task is
// solvable by construction and its difficulty is the single noise knob.
struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t scene_count = 1;
  std::size_t regions_min = 2;
  std::size_t regions_max = 8;
  std::size_t signifiers_min = 1;
  std::size_t signifiers_max = 4;
  std::size_t action_vocab = 8;
  double noise_std = 0.05;
  double distractor_rate = 0.25;
  std::size_t block_width = 16;  // width of each of the three signifier blocks
  std::size_t points_min = 24;
  std::size_t points_max = 48;
  std::size_t background_points = 64;

  void validate() const {
    if (scene_count == 0) throw ConfigError("scene_count must be positive");
    if (regions_min == 0 || regions_min > regions_max)
      throw ConfigError("region count range is empty");
    if (signifiers_min == 0 || signifiers_min > signifiers_max)
      throw ConfigError("signifier count range is empty");
    if (signifiers_min > regions_max)
      throw ConfigError("infeasible: minimum signifier count " +
                        std::to_string(signifiers_min) + " exceeds maximum region count " +
                        std::to_string(regions_max));
    if (action_vocab == 0) throw ConfigError("action vocabulary must be non-empty");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    if (!(distractor_rate >= 0.0 && distractor_rate < 1.0))
      throw ConfigError("distractor_rate must lie in [0,1)");
    if (block_width == 0) throw ConfigError("block_width must be positive");
    if (points_min == 0 || points_min > points_max)
      throw ConfigError("points-per-region range is empty");
  }

  std::size_t signifier_width() const { return 3 * block_width; }
};

struct SynthScene {
  Sample sample;
  // Latent codes behind the features; kept for diagnostics such as a
  // nearest-latent oracle. Not written to disk.
  std::vector<std::array<double, 3>> signifier_latents;
  std::vector<std::array<double, 3>> region_latents;
};

inline std::vector<std::string> default_action_names(std::size_t vocab) {
  static const std::vector<std::string> base = {"open",  "rotate", "push",  "sit",
                                                "pull",  "lift",   "press", "grasp",
                                                "turn",  "hang",   "slide", "hold"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < vocab; ++i) {
    if (i < base.size())
      out.push_back(base[i]);
    else
      out.push_back("action_" + std::to_string(i));
  }
  return out;
}

namespace detail {

// Per-(action, column) signature table: a fixed pseudo-random value that all
// signifiers of one action share, so action identity is recoverable from the
// feature block. Signed so the feature columns are zero-mean across actions;
// all-positive features would give every row a large shared component, which
// dominates the direction of downstream embeddings and crowds out the
// row-to-row differences that matching depends on.
inline double action_signature(std::uint64_t seed, std::size_t action, std::size_t column) {
  return Rng::keyed(seed ^ 0x5349474e41545552ull, action, column).uniform(-1.0, 1.0);
}

inline std::array<double, 3> random_unit_normal(Rng& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    double nx = rng.normal(), ny = rng.normal(), nz = rng.normal();
    const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
    if (norm > 1e-9) return {nx / norm, ny / norm, nz / norm};
  }
  return {0.0, 0.0, 1.0};
}

// Maps a latent code to a unit direction (spherical angles from the first two
// components), giving every region a dominant surface orientation tied to the
// same code its signifiers carry.
inline std::array<double, 3> latent_direction(const std::array<double, 3>& z) {
  const double polar = std::numbers::pi * z[0];
  const double azimuth = 2.0 * std::numbers::pi * z[1];
  return {std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth),
          std::cos(polar)};
}

// A unit normal near `axis`: Gaussian jitter, renormalized.
inline std::array<double, 3> perturbed_normal(const std::array<double, 3>& axis, Rng& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double nx = axis[0] + 0.3 * rng.normal();
    const double ny = axis[1] + 0.3 * rng.normal();
    const double nz = axis[2] + 0.3 * rng.normal();
    const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
    if (norm > 1e-9) return {nx / norm, ny / norm, nz / norm};
  }
  return axis;
}

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace detail

// Generates one scene. Every random draw derives from (seed, scene_index),
// so scenes may be generated in any order or in parallel without changing
// the output.
inline SynthScene generate_scene(const SynthConfig& cfg, std::size_t scene_index) {
  Rng meta = Rng::keyed(cfg.seed, scene_index, 0);
  Rng geom = Rng::keyed(cfg.seed, scene_index, 1);
  Rng point_rng = Rng::keyed(cfg.seed, scene_index, 2);
  Rng sig_rng = Rng::keyed(cfg.seed, scene_index, 3);

  const std::size_t m =
      static_cast<std::size_t>(meta.uniform_int(static_cast<std::int64_t>(cfg.regions_min),
                                                static_cast<std::int64_t>(cfg.regions_max)));
  // Matched-region count: distractor_rate is the target fraction of regions
  // left unmatched, clamped into the configured signifier range and [1, m].
  const std::size_t lo = std::max<std::size_t>(1, std::min(cfg.signifiers_min, m));
  const std::size_t hi = std::max<std::size_t>(lo, std::min(cfg.signifiers_max, m));
  const double target = std::round((1.0 - cfg.distractor_rate) * static_cast<double>(m));
  const std::size_t n =
      std::min(hi, std::max(lo, static_cast<std::size_t>(std::max(0.0, target))));

  // Region boxes: axis-aligned, centers kept apart by rejection sampling.
  std::vector<std::array<double, 3>> centers(m);
  std::vector<std::array<double, 3>> half_extent(m);
  for (std::size_t r = 0; r < m; ++r) {
    std::array<double, 3> c{};
    for (int attempt = 0; attempt < 100; ++attempt) {
      c = {geom.uniform(0.2, 0.8), geom.uniform(0.2, 0.8), geom.uniform(0.2, 0.8)};
      bool clear = true;
      for (std::size_t p = 0; p < r && clear; ++p) {
        const double dx = c[0] - centers[p][0];
        const double dy = c[1] - centers[p][1];
        const double dz = c[2] - centers[p][2];
        if (dx * dx + dy * dy + dz * dz < 0.2 * 0.2) clear = false;
      }
      if (clear) break;
    }
    centers[r] = c;
    half_extent[r] = {geom.uniform(0.04, 0.09), geom.uniform(0.04, 0.09),
                      geom.uniform(0.04, 0.09)};
  }

  // Matched subset: first n of a partial shuffle of region indices.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const std::size_t j = static_cast<std::size_t>(
        meta.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(m - 1)));
    std::swap(order[i], order[j]);
  }
  std::vector<std::size_t> matched(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));

  std::vector<std::uint32_t> actions(m);
  for (std::size_t r = 0; r < m; ++r)
    actions[r] = static_cast<std::uint32_t>(
        meta.uniform_int(0, static_cast<std::int64_t>(cfg.action_vocab) - 1));

  // Latent codes: matched pairs share one code plus independent noise.
  // Codes within a scene are kept apart by rejection sampling; without a
  // minimum distance, near-duplicate codes leave some signifiers without a
  // resolvable nearest region and scores measure tie-breaking luck instead
  // of matching. Each region's draws replay identically from its keyed
  // stream, so a region's code does not depend on whether it is matched.
  constexpr double kMinCodeDist2 = 0.3 * 0.3;
  std::vector<std::array<double, 3>> codes(m);
  const auto draw_code = [&codes](Rng& lat, std::size_t r) {
    std::array<double, 3> z{};
    for (int attempt = 0; attempt < 100; ++attempt) {
      z = {lat.uniform(0.1, 0.9), lat.uniform(0.1, 0.9), lat.uniform(0.1, 0.9)};
      bool clear = true;
      for (std::size_t p = 0; p < r && clear; ++p) {
        double d2 = 0.0;
        for (int d = 0; d < 3; ++d) {
          const double diff = z[static_cast<std::size_t>(d)] - codes[p][static_cast<std::size_t>(d)];
          d2 += diff * diff;
        }
        if (d2 < kMinCodeDist2) clear = false;
      }
      if (clear) break;
    }
    return z;
  };
  std::vector<std::array<double, 3>> region_latents(m);
  for (std::size_t r = 0; r < m; ++r) {
    Rng lat = Rng::keyed(cfg.seed, scene_index, 100 + r);
    codes[r] = draw_code(lat, r);
    for (int d = 0; d < 3; ++d) region_latents[r][d] = codes[r][d] + lat.normal(0.0, cfg.noise_std);
  }
  std::vector<std::size_t> region_of_signifier(n);
  std::vector<std::array<double, 3>> signifier_latents(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = matched[k];
    region_of_signifier[k] = r;
    Rng lat = Rng::keyed(cfg.seed, scene_index, 100 + r);
    const std::array<double, 3> z = draw_code(lat, r);  // replays the same draws
    for (int d = 0; d < 3; ++d) lat.normal(0.0, cfg.noise_std);  // skip the region's noise
    for (int d = 0; d < 3; ++d) signifier_latents[k][d] = z[d] + lat.normal(0.0, cfg.noise_std);
  }

  // Assemble the cloud: region points first (per region), background last.
  SynthScene out;
  Sample& sample = out.sample;
  std::vector<CandidateRegion> regions(m);
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t count = static_cast<std::size_t>(
        point_rng.uniform_int(static_cast<std::int64_t>(cfg.points_min),
                              static_cast<std::int64_t>(cfg.points_max)));
    regions[r].action_descriptor_id = actions[r];
    // Points share the region's dominant orientation (plus jitter): normals
    // that are pure per-point noise pool into one near-constant vector under
    // the max over the region, which looks identical for every region.
    const std::array<double, 3> dominant = detail::latent_direction(region_latents[r]);
    for (std::size_t p = 0; p < count; ++p) {
      std::array<double, 3> pos{};
      for (int d = 0; d < 3; ++d)
        pos[d] = centers[r][d] + point_rng.uniform(-half_extent[r][d], half_extent[r][d]);
      std::array<double, 3> normal = detail::perturbed_normal(dominant, point_rng);
      std::array<double, 6> feat{};
      for (int d = 0; d < 3; ++d)
        feat[static_cast<std::size_t>(d)] = detail::clamp01(
            region_latents[r][static_cast<std::size_t>(d)] + point_rng.normal(0.0, cfg.noise_std));
      feat[3] = normal[0];
      feat[4] = normal[1];
      feat[5] = normal[2];
      regions[r].region_points.push_back(static_cast<std::uint32_t>(sample.cloud.points.size()));
      sample.cloud.points.push_back(pos);
      sample.cloud.features.push_back(feat);
    }
  }
  for (std::size_t p = 0; p < cfg.background_points; ++p) {
    std::array<double, 3> pos = {point_rng.uniform(), point_rng.uniform(), point_rng.uniform()};
    std::array<double, 3> normal = detail::random_unit_normal(point_rng);
    sample.cloud.points.push_back(pos);
    sample.cloud.features.push_back({point_rng.uniform(), point_rng.uniform(),
                                     point_rng.uniform(), normal[0], normal[1], normal[2]});
  }

  sample.grid = scene_grid(sample.cloud);
  for (std::size_t r = 0; r < m; ++r)
    regions[r].mask = rasterize(sample.cloud, regions[r].region_points, sample.grid);
  sample.regions = std::move(regions);

  // Signifier rows: [action-signature block | latent block | mixed block].
  const std::size_t w = cfg.block_width;
  sample.signifiers.count = n;
  sample.signifiers.width = cfg.signifier_width();
  sample.signifiers.values.assign(n * sample.signifiers.width, 0.0);
  sample.gt_region.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = region_of_signifier[k];
    sample.gt_region[k] = static_cast<std::uint32_t>(r);
    const std::size_t action = actions[r];
    double* row = &sample.signifiers.values[k * sample.signifiers.width];
    // Latents live in (0.1, 0.9); encode them as 2z - 1 so every block is
    // zero-centered (see the note on action_signature above).
    for (std::size_t j = 0; j < w; ++j)
      row[j] = detail::action_signature(cfg.seed, action, j) + sig_rng.normal(0.0, cfg.noise_std);
    for (std::size_t j = 0; j < w; ++j) row[w + j] = 2.0 * signifier_latents[k][j % 3] - 1.0;
    for (std::size_t j = 0; j < w; ++j)
      row[2 * w + j] = 0.5 * detail::action_signature(cfg.seed, action, w + j) +
                       0.5 * (2.0 * signifier_latents[k][j % 3] - 1.0);
  }

  out.signifier_latents = std::move(signifier_latents);
  out.region_latents = std::move(region_latents);
  out.sample.validate();
  return out;
}

inline std::vector<SynthScene> generate(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<SynthScene> scenes;
  scenes.reserve(cfg.scene_count);
  for (std::size_t s = 0; s < cfg.scene_count; ++s) scenes.push_back(generate_scene(cfg, s));
  return scenes;
}

inline std::vector<Sample> generate_samples(const SynthConfig& cfg) {
  std::vector<SynthScene> scenes = generate(cfg);
  std::vector<Sample> out;
  out.reserve(scenes.size());
  for (auto& sc : scenes) out.push_back(std::move(sc.sample));
  return out;
}

}  // namespace affmatch
