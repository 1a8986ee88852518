// Command-line entry point: sample generation, training, evaluation,
// ablation, gradient checking, and heatmap export over documented file
// formats. Every knob is available both as a --key flag and as a key=value
// line in a config file (--config or the AFFMATCH_CONFIG environment
// variable); flags override the file. Every run writes one manifest.json
// next to its outputs and exits 0 only if the manifest records success.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "affmatch/export.hpp"
#include "affmatch/gradcheck.hpp"
#include "affmatch/model.hpp"
#include "affmatch/scene_io.hpp"
#include "affmatch/synth.hpp"
#include "affmatch/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace affmatch;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct Options {
  std::uint64_t seed = 42;
  SynthConfig synth;
  TrainConfig train;
  bool eval_macro = false;
  bool class_agnostic = false;
  std::size_t gradcheck_samples = 5;
  double gradcheck_tolerance = 1e-4;
  bool gradcheck_corrupt = false;
  std::string out_dir = ".";
  std::string data_dir;
  std::string checkpoint;
  std::string scene;
  std::string predictions;
};

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid value for " + key + ": '" + value + "'");
  }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid value for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw ConfigError("invalid value for " + key + ": '" + value + "'");
}

// One knob: a config-file key, its flag spelling, and how to read/write it on
// the options struct. The whole CLI surface is generated from this table.
struct FieldBinding {
  std::string key;
  std::string description;
  std::function<void(Options&, const std::string&)> apply;
  std::function<std::string(const Options&)> render;
};

std::vector<FieldBinding> field_bindings() {
  std::vector<FieldBinding> out;
  auto size_field = [&out](const std::string& key, const std::string& desc,
                           std::function<std::size_t*(Options&)> slot) {
    out.push_back(
        {key, desc, [slot, key](Options& o, const std::string& v) { *slot(o) = parse_size(key, v); },
         [slot](const Options& o) { return std::to_string(*slot(const_cast<Options&>(o))); }});
  };
  auto u64_field = [&out](const std::string& key, const std::string& desc,
                          std::function<std::uint64_t*(Options&)> slot) {
    out.push_back(
        {key, desc, [slot, key](Options& o, const std::string& v) { *slot(o) = parse_u64(key, v); },
         [slot](const Options& o) { return std::to_string(*slot(const_cast<Options&>(o))); }});
  };
  auto double_field = [&out](const std::string& key, const std::string& desc,
                             std::function<double*(Options&)> slot) {
    out.push_back({key, desc,
                   [slot, key](Options& o, const std::string& v) { *slot(o) = parse_double(key, v); },
                   [slot](const Options& o) { return format_double(*slot(const_cast<Options&>(o))); }});
  };
  auto bool_field = [&out](const std::string& key, const std::string& desc,
                           std::function<bool*(Options&)> slot) {
    out.push_back({key, desc,
                   [slot, key](Options& o, const std::string& v) { *slot(o) = parse_bool(key, v); },
                   [slot](const Options& o) {
                     return *slot(const_cast<Options&>(o)) ? std::string("true") : std::string("false");
                   }});
  };
  auto string_field = [&out](const std::string& key, const std::string& desc,
                             std::function<std::string*(Options&)> slot) {
    out.push_back({key, desc, [slot](Options& o, const std::string& v) { *slot(o) = v; },
                   [slot](const Options& o) { return *slot(const_cast<Options&>(o)); }});
  };

  u64_field("seed", "run seed shared by generation, initialization, and shuffling",
            [](Options& o) { return &o.seed; });

  size_field("synth.scene_count", "number of generated scenes",
             [](Options& o) { return &o.synth.scene_count; });
  size_field("synth.regions_min", "minimum candidate regions per scene",
             [](Options& o) { return &o.synth.regions_min; });
  size_field("synth.regions_max", "maximum candidate regions per scene",
             [](Options& o) { return &o.synth.regions_max; });
  size_field("synth.signifiers_min", "minimum signifier rows per scene",
             [](Options& o) { return &o.synth.signifiers_min; });
  size_field("synth.signifiers_max", "maximum signifier rows per scene",
             [](Options& o) { return &o.synth.signifiers_max; });
  size_field("synth.action_vocab", "size of the action vocabulary",
             [](Options& o) { return &o.synth.action_vocab; });
  double_field("synth.noise_std", "feature noise level",
               [](Options& o) { return &o.synth.noise_std; });
  double_field("synth.distractor_rate", "fraction of unmatched regions",
               [](Options& o) { return &o.synth.distractor_rate; });
  size_field("synth.block_width", "width of each signifier sub-vector",
             [](Options& o) { return &o.synth.block_width; });
  size_field("synth.points_min", "minimum points per region",
             [](Options& o) { return &o.synth.points_min; });
  size_field("synth.points_max", "maximum points per region",
             [](Options& o) { return &o.synth.points_max; });
  size_field("synth.background_points", "clutter points outside every region",
             [](Options& o) { return &o.synth.background_points; });

  size_field("train.epochs", "training epochs", [](Options& o) { return &o.train.epochs; });
  size_field("train.batch_size", "scenes per optimizer step",
             [](Options& o) { return &o.train.batch_size; });
  double_field("train.learning_rate", "initial step size",
               [](Options& o) { return &o.train.learning_rate; });
  double_field("train.decay_factor", "multiplier applied on schedule",
               [](Options& o) { return &o.train.decay_factor; });
  size_field("train.decay_every", "epochs between rate decays",
             [](Options& o) { return &o.train.decay_every; });
  double_field("train.clip_norm", "global gradient norm cap (0 = off)",
               [](Options& o) { return &o.train.clip_norm; });
  double_field("train.momentum", "heavy-ball coefficient (0 = plain descent)",
               [](Options& o) { return &o.train.momentum; });
  size_field("train.val_count", "samples held out from the data tail",
             [](Options& o) { return &o.train.val_count; });

  size_field("model.hidden", "backbone hidden width",
             [](Options& o) { return &o.train.model.encoder.hidden; });
  size_field("model.pooled_width", "pooled per-region feature width",
             [](Options& o) { return &o.train.model.encoder.pooled_width; });
  size_field("model.action_vocab", "action vocabulary available to the encoders",
             [](Options& o) { return &o.train.model.encoder.action_vocab; });
  size_field("model.action_embed", "width of the learned action embedding",
             [](Options& o) { return &o.train.model.encoder.action_embed; });
  size_field("model.embed_dim", "shared embedding width",
             [](Options& o) { return &o.train.model.encoder.embed_dim; });
  size_field("model.head_hidden", "projection head hidden width",
             [](Options& o) { return &o.train.model.encoder.head_hidden; });
  size_field("model.shared_dim", "cross-attention output width",
             [](Options& o) { return &o.train.model.matcher.shared_dim; });
  size_field("model.match_dim", "pair-embedding width",
             [](Options& o) { return &o.train.model.matcher.match_dim; });
  size_field("model.head_count", "pair-attention heads",
             [](Options& o) { return &o.train.model.matcher.head_count; });
  double_field("model.threshold", "dissimilarity cutoff for extra matches",
               [](Options& o) { return &o.train.model.matcher.threshold; });
  bool_field("model.scale_logits", "scale attention logits by 1/sqrt(width)",
             [](Options& o) { return &o.train.model.matcher.scale_logits; });
  bool_field("model.feed_normalized", "matcher reads unit-norm embeddings",
             [](Options& o) { return &o.train.model.feed_normalized; });
  bool_field("model.train_backbone", "update backbone weights instead of keeping them fixed",
             [](Options& o) { return &o.train.model.train_backbone; });
  double_field("model.target_primary_weight", "mass on the action's own target row",
               [](Options& o) { return &o.train.model.target_primary_weight; });

  double_field("loss.alpha", "embedding norm penalty weight",
               [](Options& o) { return &o.train.model.weights.alpha; });
  double_field("loss.beta", "parameter decay weight",
               [](Options& o) { return &o.train.model.weights.beta; });
  double_field("loss.lambda", "alignment weight",
               [](Options& o) { return &o.train.model.weights.lambda; });
  double_field("loss.gamma", "bidirectional consistency weight",
               [](Options& o) { return &o.train.model.weights.gamma; });
  double_field("loss.eta", "dissimilarity weight",
               [](Options& o) { return &o.train.model.weights.eta; });
  bool_field("loss.embed", "enable the embedding regularizer",
             [](Options& o) { return &o.train.model.toggles.embed; });
  bool_field("loss.align", "enable the alignment loss",
             [](Options& o) { return &o.train.model.toggles.align; });
  bool_field("loss.bidir", "enable the bidirectional consistency loss",
             [](Options& o) { return &o.train.model.toggles.bidir; });
  bool_field("loss.dissim", "enable the dissimilarity loss",
             [](Options& o) { return &o.train.model.toggles.dissim; });
  bool_field("loss.clipped_dissim", "clip the cosine inside the dissimilarity loss",
             [](Options& o) { return &o.train.model.toggles.clipped_dissim; });
  bool_field("loss.scalar_align", "align match-map scalars instead of pair rows",
             [](Options& o) { return &o.train.model.toggles.scalar_align; });

  bool_field("eval.macro", "average per-scene scores instead of pooling",
             [](Options& o) { return &o.eval_macro; });
  bool_field("eval.class_agnostic", "ignore action ids when matching",
             [](Options& o) { return &o.class_agnostic; });

  size_field("gradcheck.samples", "miniature samples to sweep",
             [](Options& o) { return &o.gradcheck_samples; });
  double_field("gradcheck.tolerance", "relative error bound",
               [](Options& o) { return &o.gradcheck_tolerance; });
  bool_field("gradcheck.corrupt", "inject a gradient error as a negative control",
             [](Options& o) { return &o.gradcheck_corrupt; });

  string_field("out_dir", "directory receiving outputs", [](Options& o) { return &o.out_dir; });
  string_field("data_dir", "directory holding .scene/.sig samples",
               [](Options& o) { return &o.data_dir; });
  string_field("checkpoint", "model checkpoint path", [](Options& o) { return &o.checkpoint; });
  string_field("scene", "single .scene file", [](Options& o) { return &o.scene; });
  string_field("predictions", "external prediction CSV",
               [](Options& o) { return &o.predictions; });
  return out;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> pairs;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + " is not key=value: " + t);
    pairs[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return pairs;
}

const FieldBinding* find_binding(const std::vector<FieldBinding>& bindings,
                                 const std::string& key) {
  for (const FieldBinding& b : bindings)
    if (b.key == key) return &b;
  return nullptr;
}

void apply_config_file(Options& opts, const std::vector<FieldBinding>& bindings,
                       const std::string& path) {
  for (const auto& [key, value] : parse_config_text(read_text_file(path))) {
    const FieldBinding* b = find_binding(bindings, key);
    if (!b) throw ConfigError("unknown configuration key: " + key);
    b->apply(opts, value);
  }
}

std::string config_snapshot(const Options& opts, const std::vector<FieldBinding>& bindings) {
  std::string out;
  for (const FieldBinding& b : bindings) out += b.key + "=" + b.render(opts) + "\n";
  return out;
}

void write_manifest(const std::string& subcommand, const Options& opts,
                    const std::vector<FieldBinding>& bindings,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double duration_seconds,
                    bool success, const std::string& error) {
  json m;
  m["subcommand"] = subcommand;
  m["version"] = kToolVersion;
  m["seed"] = opts.seed;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["duration_seconds"] = duration_seconds;
  m["success"] = success;
  if (!error.empty()) m["error"] = error;
  json cfg = json::object();
  for (const FieldBinding& b : bindings) cfg[b.key] = b.render(opts);
  m["config"] = cfg;
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  write_text_file((fs::path(opts.out_dir) / "manifest.json").string(), m.dump(2) + "\n");
}

using CommandBody =
    std::function<void(std::vector<std::string>& inputs, std::vector<std::string>& outputs)>;

// Shared run wrapper: time the body, always write one manifest, map error
// classes onto exit codes (2 = configuration, 1 = everything else).
int run_command(const std::string& name, Options& opts,
                const std::vector<FieldBinding>& bindings, const CommandBody& body) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> inputs, outputs;
  auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  try {
    body(inputs, outputs);
    write_manifest(name, opts, bindings, inputs, outputs, elapsed(), true, "");
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    try {
      write_manifest(name, opts, bindings, inputs, outputs, elapsed(), false, e.what());
    } catch (const std::exception&) {
    }
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      write_manifest(name, opts, bindings, inputs, outputs, elapsed(), false, e.what());
    } catch (const std::exception&) {
    }
    return 1;
  }
}

void cmd_synth(Options& opts, std::vector<std::string>& inputs,
               std::vector<std::string>& outputs) {
  (void)inputs;
  SynthConfig cfg = opts.synth;
  cfg.seed = opts.seed;
  cfg.validate();
  fs::create_directories(opts.out_dir);
  std::vector<Sample> samples = generate_samples(cfg);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    save_sample(opts.out_dir, i, samples[i]);
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%05zu", i);
    outputs.push_back((fs::path(opts.out_dir) / (std::string(name) + ".scene")).string());
    outputs.push_back((fs::path(opts.out_dir) / (std::string(name) + ".sig")).string());
  }
  const std::string actions_path = (fs::path(opts.out_dir) / "actions.txt").string();
  write_actions(actions_path, default_action_names(cfg.action_vocab));
  outputs.push_back(actions_path);
  std::cout << "wrote " << samples.size() << " scenes to " << opts.out_dir << "\n";
}

// Reject bad knobs before the dataset is even opened. The placeholder
// signifier width is synced so only genuine mistakes trip the check.
void prevalidate_train_config(const Options& opts) {
  TrainConfig cfg = opts.train;
  cfg.model.sync_widths();
  cfg.validate();
}

// Training follows the data: the signifier width comes from the loaded
// samples, everything else from the configuration.
TrainConfig resolve_train_config(const Options& opts, const std::vector<Sample>& data) {
  TrainConfig cfg = opts.train;
  cfg.seed = opts.seed;
  cfg.model.seed = opts.seed;
  cfg.model.encoder.signifier_width = data.front().signifiers.width;
  cfg.model.sync_widths();
  return cfg;
}

void cmd_train(Options& opts, const std::vector<FieldBinding>& bindings,
               std::vector<std::string>& inputs, std::vector<std::string>& outputs) {
  prevalidate_train_config(opts);
  std::vector<Sample> data = load_dataset(opts.data_dir);
  inputs.push_back(opts.data_dir);
  TrainConfig cfg = resolve_train_config(opts, data);
  TrainResult run = train(cfg, data, [](const EpochRecord& r) {
    std::cout << "epoch " << r.epoch << "  lr " << r.lr << "  loss " << r.mean_loss.total;
    if (r.has_val) std::cout << "  val mAP@0.50 " << r.val.map_50;
    std::cout << "\n";
  });

  fs::create_directories(opts.out_dir);
  const fs::path dir(opts.out_dir);
  save_model((dir / "model.ckpt").string(), run.store, run.model);
  std::string history = EpochRecord::csv_header() + "\n";
  for (const EpochRecord& r : run.history) history += r.csv_row() + "\n";
  write_text_file((dir / "history.csv").string(), history);
  std::string losses = LossReport::csv_header() + "\n";
  for (std::size_t s = 0; s < run.steps.size(); ++s) losses += run.steps[s].csv_row(s) + "\n";
  write_text_file((dir / "losses.csv").string(), losses);
  write_text_file((dir / "config.txt").string(), config_snapshot(opts, bindings));
  for (const char* f : {"model.ckpt", "history.csv", "losses.csv", "config.txt"})
    outputs.push_back((dir / f).string());

  if (!run.history.empty() && run.history.back().has_val)
    std::cout << eval_report_table(run.final_val());
  if (run.diverged) throw Error("training diverged: " + run.diagnostic);
  std::cout << "checkpoint written to " << (dir / "model.ckpt").string() << "\n";
}

SceneDetections detections_from_rows(const Sample& sample,
                                     const std::vector<PredictionRow>& rows,
                                     const std::vector<std::vector<double>>& iou_table) {
  SceneDetections scene;
  for (std::uint32_t g : sample.gt_region)
    scene.gt_action.push_back(sample.regions[g].action_descriptor_id);
  for (const PredictionRow& row : rows) {
    if (row.region >= sample.region_count())
      throw OutOfBoundsError("prediction names region " + std::to_string(row.region) +
                             " in a scene with " + std::to_string(sample.region_count()));
    scene.confidence.push_back(row.confidence);
    scene.pred_action.push_back(sample.regions[row.region].action_descriptor_id);
    std::vector<double> ious;
    for (std::uint32_t g : sample.gt_region) ious.push_back(iou_table[row.region][g]);
    scene.iou.push_back(std::move(ious));
  }
  scene.validate();
  return scene;
}

void cmd_eval(Options& opts, std::vector<std::string>& inputs,
              std::vector<std::string>& outputs) {
  if (opts.checkpoint.empty() == opts.predictions.empty())
    throw ConfigError("provide exactly one of --checkpoint or --predictions");
  std::vector<Sample> data = load_dataset(opts.data_dir);
  inputs.push_back(opts.data_dir);
  std::vector<std::vector<std::vector<double>>> tables;
  tables.reserve(data.size());
  for (const Sample& s : data) tables.push_back(region_iou_table(s));
  EvalOptions eval_options;
  eval_options.per_action = !opts.class_agnostic;
  eval_options.macro = opts.eval_macro;

  EvalReport report;
  if (!opts.checkpoint.empty()) {
    inputs.push_back(opts.checkpoint);
    LoadedModel model = load_model(opts.checkpoint);
    report = evaluate_model(model.store, model.config, data, tables, eval_options);
  } else {
    inputs.push_back(opts.predictions);
    std::vector<PredictionRow> rows = parse_predictions_csv(read_text_file(opts.predictions));
    std::vector<std::vector<PredictionRow>> by_scene(data.size());
    for (const PredictionRow& row : rows) {
      if (row.scene >= data.size())
        throw OutOfBoundsError("prediction names scene " + std::to_string(row.scene) +
                               " in a dataset of " + std::to_string(data.size()));
      by_scene[row.scene].push_back(row);
    }
    std::vector<SceneDetections> scenes;
    scenes.reserve(data.size());
    for (std::size_t s = 0; s < data.size(); ++s)
      scenes.push_back(detections_from_rows(data[s], by_scene[s], tables[s]));
    report = evaluate_tables(scenes, eval_options);
  }

  std::cout << eval_report_table(report);
  fs::create_directories(opts.out_dir);
  const std::string csv_path = (fs::path(opts.out_dir) / "eval.csv").string();
  write_text_file(csv_path, eval_report_csv(report));
  outputs.push_back(csv_path);
}

void cmd_ablate(Options& opts, std::vector<std::string>& inputs,
                std::vector<std::string>& outputs) {
  prevalidate_train_config(opts);
  std::vector<Sample> data = load_dataset(opts.data_dir);
  inputs.push_back(opts.data_dir);
  TrainConfig cfg = resolve_train_config(opts, data);
  std::vector<AblationRung> rungs = cumulative_ablation(cfg.model.toggles);
  std::vector<AblationRow> rows = ablate(cfg, data, rungs);
  std::string csv = AblationRow::csv_header() + "\n";
  std::cout << "  component set   mAP@0.25   mAP@0.50        mAP\n";
  for (const AblationRow& row : rows) {
    csv += row.csv_row() + "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%15s  %9.4f  %9.4f  %9.4f%s\n", row.label.c_str(),
                  row.report.map_25, row.report.map_50, row.report.map_50_95,
                  row.diverged ? "  (diverged)" : "");
    std::cout << line;
  }
  fs::create_directories(opts.out_dir);
  const std::string csv_path = (fs::path(opts.out_dir) / "ablation.csv").string();
  write_text_file(csv_path, csv);
  outputs.push_back(csv_path);
}

void cmd_gradcheck(Options& opts, std::vector<std::string>& inputs,
                   std::vector<std::string>& outputs) {
  (void)inputs;
  GradcheckReport report = run_gradient_check(opts.seed, opts.gradcheck_samples,
                                              opts.gradcheck_tolerance, opts.gradcheck_corrupt);
  std::string text;
  for (const GradcheckGroup& g : report.groups) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %6zu checks   max rel err %.3e   %s\n",
                  g.name.c_str(), g.checks, g.max_rel_err, g.pass ? "PASS" : "FAIL");
    text += line;
  }
  std::cout << text;
  fs::create_directories(opts.out_dir);
  const std::string path = (fs::path(opts.out_dir) / "gradcheck.txt").string();
  write_text_file(path, text);
  outputs.push_back(path);
  if (!report.pass) {
    std::string names;
    for (const std::string& g : report.failing_groups()) names += (names.empty() ? "" : ", ") + g;
    throw Error("gradient check failed for: " + names);
  }
}

void cmd_heatmap(Options& opts, std::vector<std::string>& inputs,
                 std::vector<std::string>& outputs) {
  if (opts.checkpoint.empty()) throw ConfigError("heatmap needs --checkpoint");
  if (opts.scene.empty()) throw ConfigError("heatmap needs --scene");
  inputs.push_back(opts.checkpoint);
  inputs.push_back(opts.scene);
  LoadedModel model = load_model(opts.checkpoint);
  Sample sample = load_sample(opts.scene);
  ModelOutputs out = model_forward(model.store, model.config, sample);
  Assignment assignment =
      assign(out.match.d, out.match.match_map, model.config.matcher.threshold);

  fs::create_directories(opts.out_dir);
  const fs::path dir(opts.out_dir);
  auto drop = [&outputs](const std::string& path, const std::string& content) {
    write_text_file(path, content);
    outputs.push_back(path);
  };
  drop((dir / "dissimilarity.csv").string(), matrix_csv(out.match.d));
  drop((dir / "dissimilarity.pgm").string(), matrix_pgm(out.match.d));
  drop((dir / "match_map.csv").string(), matrix_csv(out.match.match_map));
  drop((dir / "match_map.pgm").string(), matrix_pgm(min_max_normalize(out.match.match_map)));
  drop((dir / "assignment.csv").string(), matrix_csv(assignment.a));
  drop((dir / "assignment.pgm").string(), matrix_pgm(assignment.a));
  std::cout << "wrote " << sample.signifier_count() << "x" << sample.region_count()
            << " maps to " << opts.out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  Options opts;
  const std::vector<FieldBinding> bindings = field_bindings();

  CLI::App app{"cross-modal affordance matching toolkit"};
  app.require_subcommand(1);
  std::map<std::string, std::string> staged;
  std::string config_path;
  struct SubEntry {
    CLI::App* sub;
    std::map<std::string, CLI::Option*> options;
  };
  std::map<std::string, SubEntry> subs;
  const std::vector<std::pair<std::string, std::string>> names = {
      {"synth", "generate matched scene/signifier samples"},
      {"train", "fit the matcher on a sample directory"},
      {"eval", "score a checkpoint or prediction file against a dataset"},
      {"ablate", "train the cumulative loss ladder and tabulate scores"},
      {"gradcheck", "compare analytic gradients with finite differences"},
      {"heatmap", "export dissimilarity/match/assignment maps for one scene"}};
  for (const auto& [name, desc] : names) {
    CLI::App* sub = app.add_subcommand(name, desc);
    SubEntry entry{sub, {}};
    sub->add_option("--config", config_path, "key=value configuration file");
    for (const FieldBinding& b : bindings)
      entry.options[b.key] =
          sub->add_option("--" + b.key, staged[b.key], b.description);
    subs.emplace(name, entry);
  }

  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();
  const SubEntry& entry = subs.at(name);

  // precedence: defaults, then the config file, then explicit flags
  try {
    if (config_path.empty())
      if (const char* env = std::getenv("AFFMATCH_CONFIG")) config_path = env;
    if (!config_path.empty()) apply_config_file(opts, bindings, config_path);
    for (const FieldBinding& b : bindings)
      if (entry.options.at(b.key)->count() > 0) b.apply(opts, staged[b.key]);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  if (name == "synth")
    return run_command(name, opts, bindings,
                       [&](auto& in, auto& out) { cmd_synth(opts, in, out); });
  if (name == "train")
    return run_command(name, opts, bindings,
                       [&](auto& in, auto& out) { cmd_train(opts, bindings, in, out); });
  if (name == "eval")
    return run_command(name, opts, bindings,
                       [&](auto& in, auto& out) { cmd_eval(opts, in, out); });
  if (name == "ablate")
    return run_command(name, opts, bindings,
                       [&](auto& in, auto& out) { cmd_ablate(opts, in, out); });
  if (name == "gradcheck")
    return run_command(name, opts, bindings,
                       [&](auto& in, auto& out) { cmd_gradcheck(opts, in, out); });
  if (name == "heatmap")
    return run_command(name, opts, bindings,
                       [&](auto& in, auto& out) { cmd_heatmap(opts, in, out); });
  std::cerr << "unknown subcommand: " << name << "\n";
  return 1;
}
