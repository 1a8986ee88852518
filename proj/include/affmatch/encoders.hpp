#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "affmatch/errors.hpp"
#include "affmatch/geometry.hpp"
#include "affmatch/param_store.hpp"
#include "affmatch/rng.hpp"
#include "affmatch/sample.hpp"
#include "affmatch/tensor.hpp"

namespace affmatch {

// Width layout of the two toy backbones and the shared projection heads.
// The signifier path maps n x signifier_width rows through two hidden layers
// back to signifier_width (the raw feature matrix handed to the matcher).
// The region path runs a shared per-point network, max-pools it, and appends
// a learned action embedding; its raw width is pooled_width + action_embed.
struct EncoderDims {
  std::size_t signifier_width = 48;
  std::size_t hidden = 64;
  std::size_t pooled_width = 24;
  std::size_t action_vocab = 8;
  std::size_t action_embed = 8;
  std::size_t embed_dim = 32;
  std::size_t head_hidden = 32;

  static constexpr std::size_t point_input_width = 9;  // xyz-centroid, rgb, normal
  std::size_t region_feature_width() const { return pooled_width + action_embed; }

  void validate() const {
    if (signifier_width == 0 || hidden == 0 || pooled_width == 0 || action_vocab == 0 ||
        action_embed == 0 || embed_dim == 0 || head_hidden == 0)
      throw ConfigError("encoder dimensions must be positive");
  }
};

// Sequentially indexed parameter factory: weights draw from a uniform range
// scaled by fan-in + fan-out, biases start at zero. Each parameter owns its
// own counter-keyed stream so the values depend only on (seed, order).
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : seed_(seed) {}

  Tensor weight(ParamStore& store, const std::string& name, std::size_t rows,
                std::size_t cols, double gain = 1.0) {
    return store.create(name, rows, cols, draw(rows, cols, gain));
  }

  // Two parameters sharing one draw. Initializing a query/key pair this way
  // makes the initial attention logits an approximate similarity measure:
  // E[W Wᵀ] is a multiple of the identity, so q·k ≈ gain² fᵢ·fⱼ.
  void weight_pair(ParamStore& store, const std::string& first, const std::string& second,
                   std::size_t rows, std::size_t cols, double gain = 1.0) {
    std::vector<double> values = draw(rows, cols, gain);
    store.create(first, rows, cols, values);
    store.create(second, rows, cols, std::move(values));
  }

  // Biases start slightly positive so rectified units open at initialization;
  // in particular the final head bias keeps pre-normalization rows away from
  // the exact zero vector even if every upstream unit is dead.
  Tensor bias(ParamStore& store, const std::string& name, std::size_t cols) {
    ++index_;  // keep downstream streams stable whether or not biases randomize
    return store.create(name, 1, cols, std::vector<double>(cols, 0.01));
  }

 private:
  std::vector<double> draw(std::size_t rows, std::size_t cols, double gain) {
    Rng rng = Rng::keyed(seed_, index_++, 0);
    const double limit = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> values(rows * cols);
    for (double& v : values) v = rng.uniform(-limit, limit);
    return values;
  }

  std::uint64_t seed_;
  std::uint64_t index_ = 0;
};

inline void create_encoder_params(ParamStore& store, const EncoderDims& dims,
                                  ParamInit& init) {
  dims.validate();
  init.weight(store, "phi.w1", dims.signifier_width, dims.hidden);
  init.bias(store, "phi.b1", dims.hidden);
  init.weight(store, "phi.w2", dims.hidden, dims.signifier_width);
  init.bias(store, "phi.b2", dims.signifier_width);
  init.weight(store, "psi.w1", EncoderDims::point_input_width, dims.hidden);
  init.bias(store, "psi.b1", dims.hidden);
  init.weight(store, "psi.w2", dims.hidden, dims.pooled_width);
  init.bias(store, "psi.b2", dims.pooled_width);
  init.weight(store, "psi.action_table", dims.action_vocab, dims.action_embed);
  init.weight(store, "heads.phi.p1", dims.signifier_width, dims.head_hidden);
  init.bias(store, "heads.phi.c1", dims.head_hidden);
  init.weight(store, "heads.phi.p2", dims.head_hidden, dims.embed_dim);
  init.bias(store, "heads.phi.c2", dims.embed_dim);
  init.weight(store, "heads.psi.p1", dims.region_feature_width(), dims.head_hidden);
  init.bias(store, "heads.psi.c1", dims.head_hidden);
  init.weight(store, "heads.psi.p2", dims.head_hidden, dims.embed_dim);
  init.bias(store, "heads.psi.c2", dims.embed_dim);
}

// Divides every row by its Euclidean norm. Rows are checked first: a
// pre-normalization zero row signals dead parameters and raises rather than
// silently producing garbage.
inline Tensor unit_normalize(const Tensor& x) {
  Tensor norms = l2_norm_rows(x);
  for (std::size_t i = 0; i < norms.rows(); ++i)
    if (norms.at(i, 0) < 1e-12)
      throw DegenerateError("row " + std::to_string(i) +
                            " has zero norm before unit normalization");
  Tensor expanded = matmul(norms, Tensor::filled(1, x.cols(), 1.0));
  return divide(x, expanded);
}

inline Tensor signifier_tensor(const SignifierFeatures& feats) {
  feats.validate();
  return Tensor::from(feats.count, feats.width, feats.values);
}

// Per-point input rows for one region: centered coordinates, color channels
// shifted from their stored [0, 1] range to [-0.5, 0.5], and normals as-is.
// Zero-centered inputs keep the point network's outputs from sharing one
// large positive component across all regions.
inline Tensor region_point_tensor(const ScenePointCloud& cloud, const CandidateRegion& region) {
  if (region.region_points.empty()) throw EmptyInputError("region has no points");
  // The centroid sum runs in index order so the embedding is bitwise
  // invariant to how the caller ordered the region's points.
  std::vector<std::uint32_t> sorted = region.region_points;
  std::sort(sorted.begin(), sorted.end());
  double cx = 0, cy = 0, cz = 0;
  for (std::uint32_t idx : sorted) {
    if (idx >= cloud.size())
      throw OutOfBoundsError("region point index " + std::to_string(idx) +
                             " outside cloud of size " + std::to_string(cloud.size()));
    cx += cloud.points[idx][0];
    cy += cloud.points[idx][1];
    cz += cloud.points[idx][2];
  }
  const double inv = 1.0 / static_cast<double>(region.region_points.size());
  cx *= inv;
  cy *= inv;
  cz *= inv;
  std::vector<double> rows;
  rows.reserve(region.region_points.size() * EncoderDims::point_input_width);
  for (std::uint32_t idx : region.region_points) {
    rows.push_back(cloud.points[idx][0] - cx);
    rows.push_back(cloud.points[idx][1] - cy);
    rows.push_back(cloud.points[idx][2] - cz);
    const std::array<double, 6>& f = cloud.features[idx];
    rows.push_back(f[0] - 0.5);
    rows.push_back(f[1] - 0.5);
    rows.push_back(f[2] - 0.5);
    rows.push_back(f[3]);
    rows.push_back(f[4]);
    rows.push_back(f[5]);
  }
  return Tensor::from(region.region_points.size(), EncoderDims::point_input_width,
                      std::move(rows));
}

// Backbone outputs are scaled so each dimension sits near unit variance —
// the scale a standardized feature pipeline delivers. Bare tanh leaves
// features at roughly 0.4 rms, and every gradient that flows through the
// bilinear attention maps shrinks with the square of that scale.
inline constexpr double kFeatureScale = 3.0;

// Raw signifier features: two hidden layers, width preserved. tanh keeps the
// hidden activations zero-centered; with a one-sided nonlinearity every
// activation vector lives in the positive orthant, so after unit
// normalization all embeddings of a modality crowd around one direction and
// the matcher cannot separate them.
inline Tensor phi_backbone(const ParamStore& store, const Tensor& x) {
  Tensor h = tanh_t(add_row(matmul(x, store.at("phi.w1")), store.at("phi.b1")));
  return scale(tanh_t(add_row(matmul(h, store.at("phi.w2")), store.at("phi.b2"))), kFeatureScale);
}

// Raw region features: shared point network, max-pool, action embedding.
inline Tensor psi_backbone(const ParamStore& store, const EncoderDims& dims,
                           const ScenePointCloud& cloud,
                           const std::vector<CandidateRegion>& regions) {
  if (regions.empty()) throw EmptyInputError("no candidate regions");
  std::vector<Tensor> rows;
  rows.reserve(regions.size());
  for (const CandidateRegion& region : regions) {
    if (region.action_descriptor_id >= dims.action_vocab)
      throw OutOfBoundsError("action descriptor " +
                             std::to_string(region.action_descriptor_id) +
                             " outside vocabulary of size " + std::to_string(dims.action_vocab));
    Tensor pts = region_point_tensor(cloud, region);
    Tensor h = tanh_t(add_row(matmul(pts, store.at("psi.w1")), store.at("psi.b1")));
    Tensor per_point = tanh_t(add_row(matmul(h, store.at("psi.w2")), store.at("psi.b2")));
    Tensor pooled = colwise_max(per_point);
    Tensor action = slice_rows(store.at("psi.action_table"), region.action_descriptor_id, 1);
    rows.push_back(concat_cols({pooled, action}));
  }
  return scale(concat_rows(rows), kFeatureScale);
}

// Two-layer projection head shared in shape by both modalities; prefix is
// "heads.phi" or "heads.psi".
inline Tensor projection_head(const ParamStore& store, const std::string& prefix,
                              const Tensor& x) {
  Tensor h = tanh_t(add_row(matmul(x, store.at(prefix + ".p1")), store.at(prefix + ".c1")));
  return add_row(matmul(h, store.at(prefix + ".p2")), store.at(prefix + ".c2"));
}

// Hook applied to signifier features before the backbone; identity by default.
using InputAugmentation = std::function<Tensor(const Tensor&)>;
inline Tensor no_augmentation(const Tensor& x) { return x; }

// Unit-norm signifier embeddings (n x embed_dim).
inline Tensor phi_embeddings(const ParamStore& store, const Tensor& signifier_rows,
                             const InputAugmentation& augment = no_augmentation) {
  return unit_normalize(projection_head(store, "heads.phi", phi_backbone(store, augment(signifier_rows))));
}

// Unit-norm region embeddings (m x embed_dim).
inline Tensor psi_embeddings(const ParamStore& store, const EncoderDims& dims,
                             const ScenePointCloud& cloud,
                             const std::vector<CandidateRegion>& regions) {
  return unit_normalize(projection_head(store, "heads.psi", psi_backbone(store, dims, cloud, regions)));
}

}  // namespace affmatch
