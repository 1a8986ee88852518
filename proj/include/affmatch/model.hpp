#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "affmatch/checkpoint.hpp"
#include "affmatch/encoders.hpp"
#include "affmatch/errors.hpp"
#include "affmatch/losses.hpp"
#include "affmatch/matcher.hpp"
#include "affmatch/metrics.hpp"
#include "affmatch/param_store.hpp"
#include "affmatch/sample.hpp"
#include "affmatch/tensor.hpp"

namespace affmatch {

// Everything needed to rebuild the full parameter set and run a sample
// end to end: encoder widths, matcher widths, loss weights and toggles.
struct ModelConfig {
  EncoderDims encoder;
  MatcherDims matcher;
  LossWeights weights;
  LossToggles toggles;
  double target_primary_weight = 0.8;  // mass on the action's own basis row
  // When false (default), the matcher's attention reads the raw backbone
  // features and the unit-norm embeddings feed only the consistency and
  // norm losses. Keeping the two streams separate means the losses that
  // pull embeddings together cannot drag the attention inputs into one
  // indistinguishable cluster. When true, attention reads the unit-norm
  // embeddings themselves.
  bool feed_normalized = false;
  // When false (default), the two backbones stay at their random
  // initialization and only the projection heads, transfer maps, and matching
  // stack receive updates. A wide random nonlinear map is already a usable
  // fixed feature extractor at this scale, standing in for the large
  // pretrained backbones a full system would bring; holding it still keeps
  // the attention inputs anchored, so the objective — which only ever pulls
  // matched pairs together — cannot shrink the whole feature space onto one
  // point. Set true to fine-tune the backbones end to end.
  bool train_backbone = false;
  std::uint64_t seed = 42;

  std::size_t matcher_signifier_width() const {
    return feed_normalized ? encoder.embed_dim : encoder.signifier_width;
  }
  std::size_t matcher_region_width() const {
    return feed_normalized ? encoder.embed_dim : encoder.region_feature_width();
  }

  // Aligns the matcher's input widths with whichever encoder output feeds it.
  void sync_widths() {
    matcher.signifier_width = matcher_signifier_width();
    matcher.region_width = matcher_region_width();
  }

  void validate() const {
    encoder.validate();
    matcher.validate();
    weights.validate();
    if (matcher.signifier_width != matcher_signifier_width() ||
        matcher.region_width != matcher_region_width())
      throw ConfigError("matcher input widths do not match the encoder outputs feeding them");
    if (!(target_primary_weight >= 0.0 && target_primary_weight <= 1.0))
      throw ConfigError("target primary weight must lie in [0,1]");
    if (encoder.action_vocab > matcher.match_dim)
      throw ConfigError("action vocabulary of " + std::to_string(encoder.action_vocab) +
                        " needs basis rows wider than match_dim " +
                        std::to_string(matcher.match_dim));
  }
};

// Registers every trainable tensor. Creation order fixes the initialization
// streams, so it must never change: encoder stack, the two cross-modal
// transfer heads, then the matching stack.
inline void create_model_params(ParamStore& store, const ModelConfig& cfg) {
  cfg.validate();
  ParamInit init(cfg.seed);
  create_encoder_params(store, cfg.encoder, init);
  // The two translation maps start at identity: the consistency loss then
  // pulls matched embedding pairs directly toward each other from the first
  // step, instead of hiding their alignment inside an arbitrary rotation.
  const std::size_t d = cfg.encoder.embed_dim;
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  store.create("heads.ins", d, d, eye);
  store.create("heads.r", d, d, std::move(eye));
  create_matcher_params(store, cfg.matcher, init);
  if (!cfg.train_backbone) {
    store.freeze_prefix("phi.");
    store.freeze_prefix("psi.");
  }
}

// Config snapshot as checkpoint entries, so a saved model file is
// self-describing: loading rebuilds the exact parameter set without any
// side-channel configuration.
inline std::map<std::string, Tensor> config_meta(const ModelConfig& cfg) {
  std::map<std::string, Tensor> meta;
  meta.emplace("meta.encoder",
               Tensor::from(1, 7,
                            {static_cast<double>(cfg.encoder.signifier_width),
                             static_cast<double>(cfg.encoder.hidden),
                             static_cast<double>(cfg.encoder.pooled_width),
                             static_cast<double>(cfg.encoder.action_vocab),
                             static_cast<double>(cfg.encoder.action_embed),
                             static_cast<double>(cfg.encoder.embed_dim),
                             static_cast<double>(cfg.encoder.head_hidden)}));
  meta.emplace("meta.matcher",
               Tensor::from(1, 7,
                            {static_cast<double>(cfg.matcher.signifier_width),
                             static_cast<double>(cfg.matcher.region_width),
                             static_cast<double>(cfg.matcher.shared_dim),
                             static_cast<double>(cfg.matcher.match_dim),
                             static_cast<double>(cfg.matcher.head_count), cfg.matcher.threshold,
                             cfg.matcher.scale_logits ? 1.0 : 0.0}));
  meta.emplace("meta.weights", Tensor::from(1, 5,
                                            {cfg.weights.alpha, cfg.weights.beta,
                                             cfg.weights.lambda, cfg.weights.gamma,
                                             cfg.weights.eta}));
  meta.emplace("meta.toggles",
               Tensor::from(1, 6,
                            {cfg.toggles.embed ? 1.0 : 0.0, cfg.toggles.align ? 1.0 : 0.0,
                             cfg.toggles.bidir ? 1.0 : 0.0, cfg.toggles.dissim ? 1.0 : 0.0,
                             cfg.toggles.clipped_dissim ? 1.0 : 0.0,
                             cfg.toggles.scalar_align ? 1.0 : 0.0}));
  meta.emplace("meta.model",
               Tensor::from(1, 4,
                            {cfg.target_primary_weight, cfg.feed_normalized ? 1.0 : 0.0,
                             cfg.train_backbone ? 1.0 : 0.0,
                             static_cast<double>(cfg.seed)}));
  return meta;
}

inline ModelConfig config_from_meta(const std::map<std::string, Tensor>& entries) {
  auto fetch = [&entries](const std::string& name, std::size_t cols) -> Tensor {
    auto it = entries.find(name);
    if (it == entries.end())
      throw ConfigError("checkpoint carries no model description entry " + name);
    if (it->second.rows() != 1 || it->second.cols() != cols)
      throw ShapeError("model description entry " + name + " has the wrong shape");
    return it->second;
  };
  auto size_at = [](const Tensor& t, std::size_t j) {
    return static_cast<std::size_t>(t.at(0, j));
  };
  ModelConfig cfg;
  Tensor enc = fetch("meta.encoder", 7);
  cfg.encoder.signifier_width = size_at(enc, 0);
  cfg.encoder.hidden = size_at(enc, 1);
  cfg.encoder.pooled_width = size_at(enc, 2);
  cfg.encoder.action_vocab = size_at(enc, 3);
  cfg.encoder.action_embed = size_at(enc, 4);
  cfg.encoder.embed_dim = size_at(enc, 5);
  cfg.encoder.head_hidden = size_at(enc, 6);
  Tensor mat = fetch("meta.matcher", 7);
  cfg.matcher.signifier_width = size_at(mat, 0);
  cfg.matcher.region_width = size_at(mat, 1);
  cfg.matcher.shared_dim = size_at(mat, 2);
  cfg.matcher.match_dim = size_at(mat, 3);
  cfg.matcher.head_count = size_at(mat, 4);
  cfg.matcher.threshold = mat.at(0, 5);
  cfg.matcher.scale_logits = mat.at(0, 6) != 0.0;
  Tensor w = fetch("meta.weights", 5);
  cfg.weights.alpha = w.at(0, 0);
  cfg.weights.beta = w.at(0, 1);
  cfg.weights.lambda = w.at(0, 2);
  cfg.weights.gamma = w.at(0, 3);
  cfg.weights.eta = w.at(0, 4);
  Tensor t = fetch("meta.toggles", 6);
  cfg.toggles.embed = t.at(0, 0) != 0.0;
  cfg.toggles.align = t.at(0, 1) != 0.0;
  cfg.toggles.bidir = t.at(0, 2) != 0.0;
  cfg.toggles.dissim = t.at(0, 3) != 0.0;
  cfg.toggles.clipped_dissim = t.at(0, 4) != 0.0;
  cfg.toggles.scalar_align = t.at(0, 5) != 0.0;
  Tensor mo = fetch("meta.model", 4);
  cfg.target_primary_weight = mo.at(0, 0);
  cfg.feed_normalized = mo.at(0, 1) != 0.0;
  cfg.train_backbone = mo.at(0, 2) != 0.0;
  cfg.seed = static_cast<std::uint64_t>(mo.at(0, 3));
  cfg.validate();
  return cfg;
}

inline void save_model(const std::string& path, const ParamStore& store,
                       const ModelConfig& cfg) {
  store.save(path, config_meta(cfg));
}

struct LoadedModel {
  ModelConfig config;
  ParamStore store;
};

inline LoadedModel load_model(const std::string& path) {
  std::map<std::string, Tensor> entries = load_checkpoint(path);
  LoadedModel out;
  out.config = config_from_meta(entries);
  create_model_params(out.store, out.config);
  out.store.load_values(entries);
  return out;
}

// Parameters covered by the weight-decay term: the embedding pipeline's
// trainable part. The projection heads are always included; the backbones
// join only when they train, since decaying parameters that never move would
// just add a constant to the loss. The transfer heads and the matching stack
// are excluded.
inline std::vector<Tensor> embedding_decay_params(const ParamStore& store,
                                                  bool include_backbone) {
  std::vector<Tensor> out;
  for (const auto& [name, tensor] : store.all()) {
    const bool head =
        name.rfind("heads.phi.", 0) == 0 || name.rfind("heads.psi.", 0) == 0;
    const bool backbone = name.rfind("phi.", 0) == 0 || name.rfind("psi.", 0) == 0;
    if (head || (backbone && include_backbone)) out.push_back(tensor);
  }
  return out;
}

struct ModelOutputs {
  Tensor phi_raw;   // n x signifier_width backbone features
  Tensor psi_raw;   // m x region_feature_width backbone features
  Tensor phi;       // n x embed_dim unit-norm embeddings
  Tensor psi;       // m x embed_dim unit-norm embeddings
  MatchState match;
  Tensor targets;   // (n*m) x match_dim alignment target rows
};

inline ModelOutputs model_forward(const ParamStore& store, const ModelConfig& cfg,
                                  const Sample& sample,
                                  const TargetProvider& targets = default_target_provider()) {
  sample.validate();
  ModelOutputs out;
  out.phi_raw = phi_backbone(store, signifier_tensor(sample.signifiers));
  out.psi_raw = psi_backbone(store, cfg.encoder, sample.cloud, sample.regions);
  out.phi = unit_normalize(projection_head(store, "heads.phi", out.phi_raw));
  out.psi = unit_normalize(projection_head(store, "heads.psi", out.psi_raw));
  const Tensor& f_i = cfg.feed_normalized ? out.phi : out.phi_raw;
  const Tensor& f_p = cfg.feed_normalized ? out.psi : out.psi_raw;
  out.match = match_forward(store, cfg.matcher, f_i, f_p);
  std::vector<std::uint32_t> actions;
  actions.reserve(sample.regions.size());
  for (const CandidateRegion& region : sample.regions) actions.push_back(region.action_descriptor_id);
  out.targets = targets(actions, sample.signifier_count(), cfg.matcher.match_dim,
                        cfg.encoder.action_vocab);
  return out;
}

// Training objective on one sample, weighted against the ground-truth
// assignment so every enabled component sees exactly the annotated pairs.
inline LossBundle model_loss(const ParamStore& store, const ModelConfig& cfg,
                             const ModelOutputs& out, const Tensor& a) {
  std::optional<Tensor> embed, align, bidir, dissim;
  if (cfg.toggles.embed)
    embed = loss_embed(out.phi, out.psi, embedding_decay_params(store, cfg.train_backbone),
                       cfg.weights.alpha, cfg.weights.beta);
  if (cfg.toggles.align) {
    if (cfg.toggles.scalar_align)
      align = loss_align_scalar(out.match.match_map, out.targets, a);
    else
      align = loss_align(out.match.m_ff, out.targets, a);
  }
  if (cfg.toggles.bidir)
    bidir = loss_bidir(out.phi, out.psi, store.at("heads.ins"), store.at("heads.r"), a);
  if (cfg.toggles.dissim)
    dissim = loss_dissim(out.match.w_m, out.match.w_r, a, cfg.toggles.clipped_dissim);
  return combine_losses(embed, align, bidir, dissim, cfg.weights);
}

// Region-by-region overlap table shared by evaluation paths, so per-epoch
// validation never re-rasterizes anything.
inline std::vector<std::vector<double>> region_iou_table(const Sample& sample) {
  const std::size_t m = sample.region_count();
  std::vector<std::vector<double>> table(m, std::vector<double>(m, 0.0));
  for (std::size_t a = 0; a < m; ++a) {
    table[a][a] = 1.0;
    for (std::size_t b = a + 1; b < m; ++b) {
      const double v = voxel_iou(sample.regions[a].mask, sample.regions[b].mask);
      table[a][b] = v;
      table[b][a] = v;
    }
  }
  return table;
}

// Flattens one sample's predicted match sets into the detection layout the
// scoring code consumes; overlaps come from the precomputed region table.
inline SceneDetections scene_detections(const Sample& sample, const Assignment& assignment,
                                        const std::vector<std::vector<double>>& iou_table) {
  const std::size_t n = sample.signifier_count();
  if (assignment.match_sets.size() != n)
    throw ShapeError("assignment covers " + std::to_string(assignment.match_sets.size()) +
                     " signifiers, sample has " + std::to_string(n));
  SceneDetections scene;
  scene.gt_action.reserve(n);
  std::vector<std::uint32_t> gt_regions(sample.gt_region);
  for (std::uint32_t g : gt_regions)
    scene.gt_action.push_back(sample.regions[g].action_descriptor_id);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : assignment.match_sets[i]) {
      scene.confidence.push_back(assignment.a.at(i, j));
      scene.pred_action.push_back(sample.regions[j].action_descriptor_id);
      std::vector<double> row;
      row.reserve(n);
      for (std::uint32_t g : gt_regions) row.push_back(iou_table[j][g]);
      scene.iou.push_back(std::move(row));
    }
  }
  scene.validate();
  return scene;
}

// Full evaluation pass: forward every sample, turn match sets into scored
// detections, and pool them under the configured averaging rules.
inline EvalReport evaluate_model(const ParamStore& store, const ModelConfig& cfg,
                                 const std::vector<Sample>& samples,
                                 const std::vector<std::vector<std::vector<double>>>& iou_tables,
                                 const EvalOptions& options = EvalOptions{}) {
  if (samples.empty()) throw EmptyInputError("no samples to evaluate");
  if (iou_tables.size() != samples.size())
    throw ShapeError("overlap tables do not match the sample count");
  std::vector<SceneDetections> scenes;
  scenes.reserve(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    ModelOutputs out = model_forward(store, cfg, samples[s]);
    Assignment assignment = assign(out.match.d, out.match.match_map, cfg.matcher.threshold);
    scenes.push_back(scene_detections(samples[s], assignment, iou_tables[s]));
  }
  return evaluate_tables(scenes, options);
}

}  // namespace affmatch
