#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "affmatch/model.hpp"
#include "affmatch/synth.hpp"
#include "affmatch/trainer.hpp"

namespace affmatch {

struct GradcheckGroup {
  std::string name;
  std::size_t checks = 0;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;  // stable name order
  std::size_t samples = 0;
  double tolerance = 0.0;
  bool pass = true;

  std::vector<std::string> failing_groups() const {
    std::vector<std::string> out;
    for (const GradcheckGroup& g : groups)
      if (!g.pass) out.push_back(g.name);
    return out;
  }
};

namespace detail {

inline std::string gradcheck_group_of(const std::string& param) {
  for (const char* prefix : {"heads.phi.", "heads.psi."})
    if (param.rfind(prefix, 0) == 0) return std::string(prefix) + "*";
  if (param == "heads.ins" || param == "heads.r") return param;
  for (const char* prefix : {"phi.", "psi.", "matcher."})
    if (param.rfind(prefix, 0) == 0) return std::string(prefix) + "*";
  return param;
}

// Miniature problem sizes: a handful of regions and signifiers, embeddings a
// few units wide, so the quadratic finite-difference sweep stays fast.
inline SynthConfig gradcheck_synth(std::uint64_t seed, std::size_t sample_count) {
  SynthConfig synth;
  synth.seed = seed;
  synth.scene_count = sample_count;
  synth.regions_min = 2;
  synth.regions_max = 4;
  synth.signifiers_min = 1;
  synth.signifiers_max = 3;
  synth.action_vocab = 3;
  synth.block_width = 2;  // keeps every model width single-digit
  synth.points_min = 6;
  synth.points_max = 10;
  synth.background_points = 8;
  return synth;
}

inline ModelConfig gradcheck_model(std::uint64_t seed, const SynthConfig& synth) {
  ModelConfig model;
  model.encoder.signifier_width = synth.signifier_width();
  model.encoder.hidden = 5;
  model.encoder.pooled_width = 4;
  model.encoder.action_vocab = synth.action_vocab;
  model.encoder.action_embed = 2;
  model.encoder.embed_dim = 3;
  model.encoder.head_hidden = 4;
  model.matcher.shared_dim = 5;
  model.matcher.match_dim = 4;
  model.matcher.head_count = 2;
  model.seed = seed;
  model.sync_widths();
  return model;
}

}  // namespace detail

// Central finite differences against the analytic gradients of the full
// training objective on freshly generated miniature samples. `corrupt`
// injects a deliberate error into one analytic gradient as a negative
// control: the report must then fail and name the group.
inline GradcheckReport run_gradient_check(std::uint64_t seed, std::size_t sample_count,
                                          double tolerance, bool corrupt = false,
                                          const LossToggles& toggles = LossToggles{}) {
  if (sample_count == 0) throw ConfigError("gradient check needs at least one sample");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  SynthConfig synth = detail::gradcheck_synth(seed, sample_count);
  std::vector<Sample> samples = generate_samples(synth);

  GradcheckReport report;
  report.samples = sample_count;
  report.tolerance = tolerance;
  std::map<std::string, GradcheckGroup> groups;

  for (std::size_t s = 0; s < samples.size(); ++s) {
    ModelConfig model = detail::gradcheck_model(seed + s, synth);
    model.toggles = toggles;
    ParamStore store;
    create_model_params(store, model);
    const Sample& sample = samples[s];
    const Tensor a = gt_assignment(sample);
    auto objective = [&]() {
      return model_loss(store, model, model_forward(store, model, sample), a).total.value();
    };
    store.zero_grads();
    LossBundle bundle = model_loss(store, model, model_forward(store, model, sample), a);
    backward(bundle.total);
    if (corrupt && s == 0) {
      Tensor victim = store.at("matcher.wx");
      victim.mutable_grad()[0] += 0.5;
    }
    const double step = 1e-5;
    for (const auto& [name, tensor] : store.all()) {
      GradcheckGroup& group = groups[detail::gradcheck_group_of(name)];
      group.name = detail::gradcheck_group_of(name);
      auto& values = store.at(name).mutable_data();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + step;
        const double up = objective();
        values[i] = saved - step;
        const double down = objective();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double analytic = tensor.has_grad() ? tensor.grad()[i] : 0.0;
        const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
        ++group.checks;
        if (err > group.max_rel_err) group.max_rel_err = err;
        if (err >= tolerance) group.pass = false;
      }
    }
  }
  for (auto& [name, group] : groups) {
    report.groups.push_back(group);
    if (!group.pass) report.pass = false;
  }
  return report;
}

}  // namespace affmatch
