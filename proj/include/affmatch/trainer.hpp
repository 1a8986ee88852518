#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "affmatch/errors.hpp"
#include "affmatch/model.hpp"
#include "affmatch/rng.hpp"
#include "affmatch/sample.hpp"

namespace affmatch {

// Schedule and loop knobs around the model configuration. One seed drives
// parameter initialization and batch shuffling, so a run is a pure function
// of (config, data).
struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  double decay_factor = 0.5;
  std::size_t decay_every = 30;
  double clip_norm = 10.0;  // global gradient norm; 0 disables clipping
  double momentum = 0.0;    // heavy-ball coefficient; 0 keeps plain descent
  std::size_t val_count = 0;  // samples held out from the tail of the data
  std::uint64_t seed = 42;
  ModelConfig model;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    // zero is allowed so a run can be replayed as a pure evaluation no-op
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0))
      throw ConfigError("decay_factor must lie in (0,1]");
    if (decay_every == 0) throw ConfigError("decay_every must be positive");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
    model.validate();
  }

  // Stepped decay: epochs count from zero, so epoch 30 is the first to run
  // at half rate under the defaults.
  double lr_at(std::size_t epoch) const {
    return learning_rate * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  LossReport mean_loss;  // component means over the epoch's steps
  std::size_t clipped_steps = 0;
  std::size_t recoveries = 0;
  bool has_val = false;
  EvalReport val;

  static std::string csv_header() {
    return "epoch,lr,embed,align,bidir,dissim,total,clipped_steps,recoveries,"
           "val_map25,val_map50,val_map50_95";
  }
  std::string csv_row() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%zu", epoch, lr,
                  mean_loss.embed, mean_loss.align, mean_loss.bidir, mean_loss.dissim,
                  mean_loss.total, clipped_steps, recoveries);
    std::string row(buf);
    if (has_val) {
      std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g", val.map_25, val.map_50,
                    val.map_50_95);
      row += buf;
    } else {
      row += ",,,";
    }
    return row;
  }
};

struct TrainResult {
  ParamStore store;
  ModelConfig model;
  std::vector<EpochRecord> history;
  std::vector<LossReport> steps;  // one row per optimizer step
  bool diverged = false;
  std::string diagnostic;
  std::size_t total_recoveries = 0;

  const EvalReport& final_val() const {
    for (auto it = history.rbegin(); it != history.rend(); ++it)
      if (it->has_val) return it->val;
    throw EmptyInputError("run recorded no validation metrics");
  }
};

namespace detail {

// In-place Fisher-Yates on a salted per-epoch stream, independent of the
// parameter-initialization streams.
inline void shuffle_indices(std::vector<std::size_t>& indices, std::uint64_t seed,
                            std::size_t epoch) {
  Rng rng = Rng::keyed(seed ^ 0x53485546464c45ull, epoch, 0);
  for (std::size_t i = indices.size(); i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(indices[i - 1], indices[j]);
  }
}

// The documented recovery for a degenerate pre-normalization row: put the
// final projection biases back at their small positive start so every row
// regains a nonzero floor, then retry.
inline void restart_projection_biases(ParamStore& store) {
  for (const char* name : {"heads.phi.c2", "heads.psi.c2"}) {
    Tensor bias = store.at(name);
    bias.mutable_data().assign(bias.size(), 0.01);
  }
}

}  // namespace detail

// Mean training objective over one batch of scenes. Builds a single graph so
// one backward pass accumulates every scene's contribution.
inline LossBundle batch_loss(const ParamStore& store, const ModelConfig& cfg,
                             const std::vector<Sample>& data,
                             const std::vector<std::size_t>& batch) {
  if (batch.empty()) throw EmptyInputError("empty batch");
  Tensor total = Tensor::scalar(0.0);
  LossReport report;
  for (std::size_t idx : batch) {
    ModelOutputs out = model_forward(store, cfg, data[idx]);
    LossBundle bundle = model_loss(store, cfg, out, gt_assignment(data[idx]));
    total = add(total, bundle.total);
    report.embed += bundle.report.embed;
    report.align += bundle.report.align;
    report.bidir += bundle.report.bidir;
    report.dissim += bundle.report.dissim;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossBundle out;
  out.total = scale(total, inv);
  report.embed *= inv;
  report.align *= inv;
  report.bidir *= inv;
  report.dissim *= inv;
  report.total = out.total.value();
  report.weights = cfg.weights;
  out.report = report;
  return out;
}

// Batch objective with the documented degenerate-row recovery: restart the
// projection biases and retry the batch once before giving up.
inline LossBundle guarded_batch_loss(ParamStore& store, const ModelConfig& cfg,
                                     const std::vector<Sample>& data,
                                     const std::vector<std::size_t>& batch,
                                     std::size_t* recoveries = nullptr) {
  try {
    return batch_loss(store, cfg, data, batch);
  } catch (const DegenerateError&) {
    detail::restart_projection_biases(store);
    if (recoveries) ++*recoveries;
    return batch_loss(store, cfg, data, batch);
  }
}

using EpochCallback = std::function<void(const EpochRecord&)>;

inline TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& data,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw EmptyInputError("no training samples");
  if (cfg.val_count >= data.size())
    throw ConfigError("val_count " + std::to_string(cfg.val_count) + " leaves no training data");
  const std::size_t train_count = data.size() - cfg.val_count;
  std::vector<Sample> val(data.begin() + static_cast<std::ptrdiff_t>(train_count), data.end());
  std::vector<std::vector<std::vector<double>>> val_tables;
  val_tables.reserve(val.size());
  for (const Sample& s : val) val_tables.push_back(region_iou_table(s));

  TrainResult result;
  result.model = cfg.model;
  result.model.seed = cfg.seed;
  create_model_params(result.store, result.model);

  std::map<std::string, std::vector<double>> last_good = result.store.snapshot();
  std::size_t last_good_epoch = 0;  // 0 = initialization
  std::map<std::string, std::vector<double>> velocity;
  std::vector<std::size_t> order(train_count);
  for (std::size_t i = 0; i < train_count; ++i) order[i] = i;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs && !result.diverged; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    record.lr = cfg.lr_at(epoch);
    detail::shuffle_indices(order, cfg.seed, epoch);
    std::size_t steps_in_epoch = 0;

    for (std::size_t start = 0; start < train_count; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, train_count - start);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(start + count));
      std::size_t recovered = 0;
      LossBundle bundle = guarded_batch_loss(result.store, result.model, data, batch, &recovered);
      record.recoveries += recovered;
      result.total_recoveries += recovered;
      if (!std::isfinite(bundle.report.total)) {
        result.store.restore(last_good);
        result.diverged = true;
        result.diagnostic = "total loss became non-finite at epoch " + std::to_string(epoch) +
                            " step " + std::to_string(step) + "; parameters restored to " +
                            (last_good_epoch == 0
                                 ? std::string("initialization")
                                 : "end of epoch " + std::to_string(last_good_epoch - 1));
        break;
      }
      result.store.zero_grads();
      backward(bundle.total);
      bool clipped = false;
      result.store.sgd_step(record.lr, cfg.clip_norm, &clipped,
                            cfg.momentum > 0.0 ? &velocity : nullptr, cfg.momentum);
      if (clipped) ++record.clipped_steps;
      result.steps.push_back(bundle.report);
      record.mean_loss.embed += bundle.report.embed;
      record.mean_loss.align += bundle.report.align;
      record.mean_loss.bidir += bundle.report.bidir;
      record.mean_loss.dissim += bundle.report.dissim;
      record.mean_loss.total += bundle.report.total;
      ++steps_in_epoch;
      ++step;
    }
    if (result.diverged) break;

    if (steps_in_epoch > 0) {
      const double inv = 1.0 / static_cast<double>(steps_in_epoch);
      record.mean_loss.embed *= inv;
      record.mean_loss.align *= inv;
      record.mean_loss.bidir *= inv;
      record.mean_loss.dissim *= inv;
      record.mean_loss.total *= inv;
    }
    record.mean_loss.weights = cfg.model.weights;
    if (!val.empty()) {
      record.has_val = true;
      record.val = evaluate_model(result.store, result.model, val, val_tables);
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    last_good = result.store.snapshot();
    last_good_epoch = epoch + 1;
  }
  return result;
}

// One rung of the cumulative loss ladder.
struct AblationRung {
  std::string label;
  LossToggles toggles;
};

// align -> +dissim -> +embed -> +bidir, each rung keeping the previous ones.
// Flavor flags (clipping, scalar alignment) carry over from the base config.
inline std::vector<AblationRung> cumulative_ablation(const LossToggles& base) {
  LossToggles t = base;
  t.embed = t.align = t.bidir = t.dissim = false;
  std::vector<AblationRung> rungs;
  t.align = true;
  rungs.push_back({"align", t});
  t.dissim = true;
  rungs.push_back({"+dissim", t});
  t.embed = true;
  rungs.push_back({"+embed", t});
  t.bidir = true;
  rungs.push_back({"+bidir", t});
  return rungs;
}

struct AblationRow {
  std::string label;
  LossToggles toggles;
  EvalReport report;
  bool diverged = false;

  static std::string csv_header() { return "label,map25,map50,map50_95"; }
  std::string csv_row() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g", label.c_str(), report.map_25,
                  report.map_50, report.map_50_95);
    return buf;
  }
};

// One full training run per rung on identical seed and data; rows come back
// in input order.
inline std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<Sample>& data,
                                       const std::vector<AblationRung>& rungs) {
  if (rungs.empty()) throw EmptyInputError("no ablation rungs");
  if (base.val_count == 0) throw ConfigError("ablation needs validation samples");
  std::vector<AblationRow> rows;
  rows.reserve(rungs.size());
  for (const AblationRung& rung : rungs) {
    TrainConfig cfg = base;
    cfg.model.toggles = rung.toggles;
    TrainResult run = train(cfg, data);
    AblationRow row;
    row.label = rung.label;
    row.toggles = rung.toggles;
    row.diverged = run.diverged;
    if (!run.diverged) row.report = run.final_val();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace affmatch
