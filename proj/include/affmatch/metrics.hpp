#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "affmatch/errors.hpp"
#include "affmatch/geometry.hpp"

namespace affmatch {

struct Prediction {
  VoxelMask mask;
  double confidence = 0.0;
  std::uint32_t action_descriptor_id = 0;
};

struct GroundTruth {
  VoxelMask mask;
  std::uint32_t action_descriptor_id = 0;
};

struct EvalOptions {
  bool per_action = true;  // match and average within each action id
  bool macro = false;      // average per-scene scores instead of pooling
};

struct EvalReport {
  std::map<double, double> ap_per_threshold;
  double map_25 = 0.0;
  double map_50 = 0.0;
  double map_50_95 = 0.0;
  std::map<std::uint32_t, double> per_action_50;  // actions with ground truth only
};

// Matching inputs for one scene, reduced to confidences and an IoU table so
// evaluation never re-rasterizes masks. iou[p][g] pairs prediction p with
// ground truth g.
struct SceneDetections {
  std::vector<double> confidence;
  std::vector<std::uint32_t> pred_action;
  std::vector<std::uint32_t> gt_action;
  std::vector<std::vector<double>> iou;

  void validate() const {
    if (confidence.size() != pred_action.size() || confidence.size() != iou.size())
      throw ShapeError("detection fields disagree on the prediction count");
    for (const auto& row : iou)
      if (row.size() != gt_action.size())
        throw ShapeError("IoU row width does not match the ground-truth count");
  }
};

inline std::vector<double> eval_thresholds() {
  std::vector<double> t = {0.25};
  for (int k = 0; k <= 9; ++k) t.push_back((50 + 5 * k) / 100.0);
  return t;
}

namespace detail {

struct RankedEntry {
  double confidence = 0.0;
  std::size_t order = 0;  // global insertion order; breaks confidence ties
  bool tp = false;
};

// Greedy per-scene matching: predictions in descending confidence (ties by
// insertion order) each claim the unmatched ground truth of highest IoU at
// or above the threshold. Entries come back in insertion order carrying a
// global order key for later pooling. gt_count accumulates the scene's
// ground-truth total for the selected action subset.
inline std::vector<RankedEntry> match_scene(const SceneDetections& scene, double threshold,
                                            const std::optional<std::uint32_t>& action,
                                            std::size_t& order_counter,
                                            std::size_t& gt_count) {
  std::vector<std::size_t> preds, gts;
  for (std::size_t p = 0; p < scene.confidence.size(); ++p)
    if (!action || scene.pred_action[p] == *action) preds.push_back(p);
  for (std::size_t g = 0; g < scene.gt_action.size(); ++g)
    if (!action || scene.gt_action[g] == *action) gts.push_back(g);
  gt_count += gts.size();

  std::vector<std::size_t> rank = preds;
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    return scene.confidence[a] > scene.confidence[b];
  });

  std::vector<bool> taken(gts.size(), false);
  std::vector<bool> is_tp(scene.confidence.size(), false);
  for (std::size_t p : rank) {
    std::size_t best = gts.size();
    double best_iou = 0.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi]) continue;
      const double iou = scene.iou[p][gts[gi]];
      if (iou >= threshold && iou > best_iou) {
        best_iou = iou;
        best = gi;
      }
    }
    if (best < gts.size()) {
      taken[best] = true;
      is_tp[p] = true;
    }
  }

  std::vector<RankedEntry> out;
  out.reserve(preds.size());
  for (std::size_t p : preds) out.push_back({scene.confidence[p], order_counter++, is_tp[p]});
  return out;
}

// Area under the precision-recall curve using the precision envelope: each
// recall step earns the best precision achieved at that recall or beyond.
inline double ap_from_entries(std::vector<RankedEntry> entries, std::size_t gt_count) {
  if (gt_count == 0) throw EmptyInputError("no ground truths to score against");
  if (entries.empty()) return 0.0;
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.order < b.order;
  });
  const std::size_t k = entries.size();
  std::vector<double> precision(k), recall(k);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (entries[i].tp) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
  }
  std::vector<double> envelope(k);
  double running = 0.0;
  for (std::size_t i = k; i-- > 0;) {
    running = std::max(running, precision[i]);
    envelope[i] = running;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    if (entries[i].tp) {
      ap += (recall[i] - prev_recall) * envelope[i];
      prev_recall = recall[i];
    }
  return ap;
}

// Pooled score over a span of scenes at one threshold: per-action averaging
// over every action holding ground truth, or one class-agnostic pool.
inline std::optional<double> pooled_score(const std::vector<SceneDetections>& scenes,
                                          std::size_t first, std::size_t count,
                                          double threshold, bool per_action) {
  if (per_action) {
    std::vector<std::uint32_t> actions;
    for (std::size_t s = first; s < first + count; ++s)
      for (std::uint32_t a : scenes[s].gt_action) actions.push_back(a);
    std::sort(actions.begin(), actions.end());
    actions.erase(std::unique(actions.begin(), actions.end()), actions.end());
    if (actions.empty()) return std::nullopt;
    double total = 0.0;
    for (std::uint32_t a : actions) {
      std::vector<RankedEntry> pool;
      std::size_t order = 0, gt_count = 0;
      for (std::size_t s = first; s < first + count; ++s) {
        auto entries = match_scene(scenes[s], threshold, a, order, gt_count);
        pool.insert(pool.end(), entries.begin(), entries.end());
      }
      total += ap_from_entries(std::move(pool), gt_count);
    }
    return total / static_cast<double>(actions.size());
  }
  std::vector<RankedEntry> pool;
  std::size_t order = 0, gt_count = 0;
  for (std::size_t s = first; s < first + count; ++s) {
    auto entries = match_scene(scenes[s], threshold, std::nullopt, order, gt_count);
    pool.insert(pool.end(), entries.begin(), entries.end());
  }
  if (gt_count == 0) return std::nullopt;
  return ap_from_entries(std::move(pool), gt_count);
}

}  // namespace detail

// Score at one threshold across all scenes; micro pools matched predictions
// globally, macro averages per-scene scores over scenes with ground truth.
inline double map_at_threshold(const std::vector<SceneDetections>& scenes, double threshold,
                               const EvalOptions& options = {}) {
  for (const auto& scene : scenes) scene.validate();
  if (options.macro) {
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      auto value = detail::pooled_score(scenes, s, 1, threshold, options.per_action);
      if (value) {
        total += *value;
        ++counted;
      }
    }
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
  }
  auto value = detail::pooled_score(scenes, 0, scenes.size(), threshold, options.per_action);
  return value ? *value : 0.0;
}

inline EvalReport evaluate_tables(const std::vector<SceneDetections>& scenes,
                                  const EvalOptions& options = {}) {
  EvalReport report;
  for (double t : eval_thresholds())
    report.ap_per_threshold[t] = map_at_threshold(scenes, t, options);
  report.map_25 = report.ap_per_threshold.at(0.25);
  report.map_50 = report.ap_per_threshold.at(0.50);
  double total = 0.0;
  for (int k = 0; k <= 9; ++k) total += report.ap_per_threshold.at((50 + 5 * k) / 100.0);
  report.map_50_95 = total / 10.0;

  // Per-action breakdown at 0.50, pooled; actions without ground truth are
  // simply absent.
  std::vector<std::uint32_t> actions;
  for (const auto& scene : scenes)
    for (std::uint32_t a : scene.gt_action) actions.push_back(a);
  std::sort(actions.begin(), actions.end());
  actions.erase(std::unique(actions.begin(), actions.end()), actions.end());
  for (std::uint32_t a : actions) {
    std::vector<detail::RankedEntry> pool;
    std::size_t order = 0, gt_count = 0;
    for (const auto& scene : scenes) {
      auto entries = detail::match_scene(scene, 0.50, a, order, gt_count);
      pool.insert(pool.end(), entries.begin(), entries.end());
    }
    report.per_action_50[a] = detail::ap_from_entries(std::move(pool), gt_count);
  }
  return report;
}

// Builds the IoU table for one scene from masks; grids must agree.
inline SceneDetections build_scene_detections(const std::vector<Prediction>& preds,
                                              const std::vector<GroundTruth>& gts) {
  SceneDetections scene;
  for (const auto& p : preds) {
    scene.confidence.push_back(p.confidence);
    scene.pred_action.push_back(p.action_descriptor_id);
    std::vector<double> row;
    row.reserve(gts.size());
    for (const auto& g : gts) row.push_back(voxel_iou(p.mask, g.mask));
    scene.iou.push_back(std::move(row));
  }
  for (const auto& g : gts) scene.gt_action.push_back(g.action_descriptor_id);
  return scene;
}

// Class-agnostic single-scene average precision over masks.
inline double average_precision(const std::vector<Prediction>& preds,
                                const std::vector<VoxelMask>& gts, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw ConfigError("IoU threshold must lie in (0,1]");
  if (gts.empty()) throw EmptyInputError("no ground truths to score against");
  std::vector<GroundTruth> gt_rows;
  gt_rows.reserve(gts.size());
  for (const auto& mask : gts) gt_rows.push_back({mask, 0});
  SceneDetections scene = build_scene_detections(preds, gt_rows);
  EvalOptions agnostic;
  agnostic.per_action = false;
  return map_at_threshold({scene}, iou_threshold, agnostic);
}

inline EvalReport evaluate(const std::vector<std::vector<Prediction>>& preds_per_scene,
                           const std::vector<std::vector<GroundTruth>>& gts_per_scene,
                           const EvalOptions& options = {}) {
  if (preds_per_scene.size() != gts_per_scene.size())
    throw ShapeError("prediction and ground-truth scene lists differ in length");
  std::vector<SceneDetections> scenes;
  scenes.reserve(preds_per_scene.size());
  for (std::size_t s = 0; s < preds_per_scene.size(); ++s)
    scenes.push_back(build_scene_detections(preds_per_scene[s], gts_per_scene[s]));
  return evaluate_tables(scenes, options);
}

}  // namespace affmatch
