#pragma once

#include <cstdint>
#include <vector>

#include "affmatch/errors.hpp"
#include "affmatch/geometry.hpp"
#include "affmatch/tensor.hpp"

namespace affmatch {

// Row-major matrix of visual-signifier feature rows. Each row is the
// concatenation of the human, object, and interaction sub-vectors; the split
// widths live in the encoder configuration.
struct SignifierFeatures {
  std::size_t count = 0;
  std::size_t width = 0;
  std::vector<double> values;  // count * width

  double at(std::size_t i, std::size_t j) const { return values[i * width + j]; }

  void validate() const {
    if (count == 0 || width == 0) throw EmptyInputError("signifier features: empty");
    if (values.size() != count * width)
      throw ShapeError("signifier features: " + std::to_string(values.size()) +
                       " values do not fill " + std::to_string(count) + "x" +
                       std::to_string(width));
  }
};

// One matching problem: a scene cloud, its candidate regions, the signifier
// rows to ground, and the target region per signifier.
struct Sample {
  ScenePointCloud cloud;
  std::vector<CandidateRegion> regions;
  SignifierFeatures signifiers;
  std::vector<std::uint32_t> gt_region;  // size == signifiers.count
  GridSpec grid;                         // grid shared by every region mask

  std::size_t signifier_count() const { return signifiers.count; }
  std::size_t region_count() const { return regions.size(); }

  void validate() const {
    signifiers.validate();
    if (regions.empty()) throw EmptyInputError("sample: no candidate regions");
    if (gt_region.size() != signifiers.count)
      throw ShapeError("sample: " + std::to_string(gt_region.size()) +
                       " ground-truth rows for " + std::to_string(signifiers.count) +
                       " signifiers");
    for (std::uint32_t g : gt_region)
      if (g >= regions.size())
        throw OutOfBoundsError("sample: ground-truth region " + std::to_string(g) + " out of " +
                               std::to_string(regions.size()));
    for (const auto& r : regions) {
      if (r.region_points.empty()) throw EmptyInputError("sample: region with no points");
      for (std::uint32_t idx : r.region_points)
        if (idx >= cloud.size())
          throw OutOfBoundsError("sample: region point index " + std::to_string(idx) +
                                 " out of " + std::to_string(cloud.size()));
    }
  }
};

// Binary ground-truth assignment matrix (n x m, one 1 per row).
inline Tensor gt_assignment(const Sample& sample) {
  const std::size_t n = sample.signifier_count(), m = sample.region_count();
  std::vector<double> a(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i * m + sample.gt_region[i]] = 1.0;
  return Tensor::from(n, m, std::move(a));
}

}  // namespace affmatch
