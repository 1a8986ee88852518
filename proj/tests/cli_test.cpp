// End-to-end tests driving the command-line binary as a subprocess: every
// subcommand, the config-file/flag precedence rules, the manifest contract,
// and the exit-code mapping.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include "affmatch/export.hpp"
#include "affmatch/metrics.hpp"
#include "affmatch/model.hpp"
#include "affmatch/scene_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace affmatch;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Fresh scratch directory per test case, removed up front so reruns start clean.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "affmatch_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out_file = dir / "_stdout.txt";
  const fs::path err_file = dir / "_stderr.txt";
  const std::string cmd = std::string(AFFMATCH_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

std::string synth_args(const fs::path& out_dir, unsigned seed, std::size_t scenes) {
  std::ostringstream s;
  s << "synth --out_dir " << out_dir.string() << " --seed " << seed
    << " --synth.scene_count " << scenes
    << " --synth.points_min 6 --synth.points_max 10 --synth.background_points 12";
  return s.str();
}

json read_manifest(const fs::path& dir) { return json::parse(slurp(dir / "manifest.json")); }

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("generation is reproducible and seeds matter") {
  const fs::path dir = scratch("synth");
  REQUIRE(run_cli(synth_args(dir / "a", 7, 5), dir).exit_code == 0);
  REQUIRE(run_cli(synth_args(dir / "b", 7, 5), dir).exit_code == 0);
  REQUIRE(run_cli(synth_args(dir / "c", 8, 5), dir).exit_code == 0);

  for (const char* f : {"scene_00000.scene", "scene_00000.sig", "scene_00004.scene",
                        "scene_00004.sig", "actions.txt"}) {
    CAPTURE(f);
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  CHECK(slurp(dir / "a" / "scene_00000.scene") != slurp(dir / "c" / "scene_00000.scene"));

  const json manifest = read_manifest(dir / "a");
  CHECK(manifest["subcommand"] == "synth");
  CHECK(manifest["success"] == true);
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["outputs"].size() == 11);  // 5 scenes x 2 files + actions.txt
  CHECK(manifest["config"]["synth.scene_count"] == "5");
}

TEST_CASE("bad configurations exit with code 2 and record the failure") {
  const fs::path dir = scratch("badcfg");

  // an impossible demand: more signifiers than regions can ever exist
  CliResult r = run_cli("synth --out_dir " + (dir / "x").string() +
                            " --synth.signifiers_min 5 --synth.signifiers_max 6"
                            " --synth.regions_max 3",
                        dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("infeasible") != std::string::npos);
  const json manifest = read_manifest(dir / "x");
  CHECK(manifest["success"] == false);
  CHECK(std::string(manifest["error"]).find("infeasible") != std::string::npos);

  // values that do not parse as their declared type
  CHECK(run_cli("synth --out_dir " + dir.string() + " --synth.scene_count abc", dir).exit_code ==
        2);
  CHECK(run_cli("train --data_dir " + dir.string() + " --train.decay_factor 0", dir).exit_code ==
        2);
}

TEST_CASE("training writes checkpoint, histories, and a success manifest") {
  const fs::path dir = scratch("train");
  REQUIRE(run_cli(synth_args(dir / "data", 11, 8), dir).exit_code == 0);

  CliResult r = run_cli("train --data_dir " + (dir / "data").string() + " --out_dir " +
                            (dir / "run").string() +
                            " --seed 11 --train.epochs 2 --train.batch_size 4"
                            " --train.val_count 3",
                        dir);
  REQUIRE(r.exit_code == 0);
  for (const char* f : {"model.ckpt", "history.csv", "losses.csv", "config.txt", "manifest.json"})
    CHECK(fs::exists(dir / "run" / f));

  const std::string history = slurp(dir / "run" / "history.csv");
  CHECK(count_lines(history) == 3);  // header + one row per epoch
  CHECK(history.rfind("epoch,lr,", 0) == 0);
  const std::string config = slurp(dir / "run" / "config.txt");
  CHECK(config.find("train.epochs=2\n") != std::string::npos);
  CHECK(config.find("seed=11\n") != std::string::npos);
  const json manifest = read_manifest(dir / "run");
  CHECK(manifest["success"] == true);
  CHECK(manifest["inputs"].size() == 1);
  CHECK(manifest["outputs"].size() == 4);
  // stdout reports per-epoch progress and the final validation table
  CHECK(r.out.find("epoch 0") != std::string::npos);
  CHECK(r.out.find("val mAP@0.50") != std::string::npos);
}

TEST_CASE("evaluating a checkpoint reproduces the library scoring byte for byte") {
  const fs::path dir = scratch("evalckpt");
  REQUIRE(run_cli(synth_args(dir / "data", 13, 8), dir).exit_code == 0);
  REQUIRE(run_cli("train --data_dir " + (dir / "data").string() + " --out_dir " +
                      (dir / "run").string() +
                      " --seed 13 --train.epochs 2 --train.batch_size 4 --train.val_count 2",
                  dir)
              .exit_code == 0);

  CliResult r = run_cli("eval --data_dir " + (dir / "data").string() + " --checkpoint " +
                            (dir / "run" / "model.ckpt").string() + " --out_dir " +
                            (dir / "eval").string(),
                        dir);
  REQUIRE(r.exit_code == 0);

  const std::vector<Sample> data = load_dataset((dir / "data").string());
  std::vector<std::vector<std::vector<double>>> tables;
  for (const Sample& s : data) tables.push_back(region_iou_table(s));
  LoadedModel model = load_model((dir / "run" / "model.ckpt").string());
  const EvalReport expected = evaluate_model(model.store, model.config, data, tables, {});
  CHECK(slurp(dir / "eval" / "eval.csv") == eval_report_csv(expected));
  CHECK(r.out.find("mAP@0.50") != std::string::npos);

  // asking for both input kinds, or neither, is a configuration error
  CHECK(run_cli("eval --data_dir " + (dir / "data").string(), dir).exit_code == 2);
  CHECK(run_cli("eval --data_dir " + (dir / "data").string() + " --checkpoint a --predictions b",
                dir)
            .exit_code == 2);
}

TEST_CASE("evaluating an external prediction file matches hand-built tables") {
  const fs::path dir = scratch("evalpred");
  REQUIRE(run_cli(synth_args(dir / "data", 17, 6), dir).exit_code == 0);
  const std::vector<Sample> data = load_dataset((dir / "data").string());

  // a few arbitrary predictions per scene, none for scene 0
  std::vector<PredictionRow> rows;
  for (std::size_t s = 1; s < data.size(); ++s)
    for (std::size_t i = 0; i < 3; ++i)
      rows.push_back({s, (s * 2 + i) % data[s].region_count(), 0.3 + 0.1 * double(i)});
  const fs::path pred_path = dir / "predictions.csv";
  write_text_file(pred_path.string(), predictions_csv(rows));

  CliResult r = run_cli("eval --data_dir " + (dir / "data").string() + " --predictions " +
                            pred_path.string() + " --out_dir " + (dir / "eval").string(),
                        dir);
  REQUIRE(r.exit_code == 0);

  // rebuild the same detections directly on the library types
  std::vector<SceneDetections> scenes(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    const std::vector<std::vector<double>> table = region_iou_table(data[s]);
    for (std::uint32_t g : data[s].gt_region)
      scenes[s].gt_action.push_back(data[s].regions[g].action_descriptor_id);
    for (const PredictionRow& row : rows) {
      if (row.scene != s) continue;
      scenes[s].confidence.push_back(row.confidence);
      scenes[s].pred_action.push_back(data[s].regions[row.region].action_descriptor_id);
      std::vector<double> ious;
      for (std::uint32_t g : data[s].gt_region) ious.push_back(table[row.region][g]);
      scenes[s].iou.push_back(std::move(ious));
    }
  }
  const EvalReport expected = evaluate_tables(scenes, {});
  CHECK(slurp(dir / "eval" / "eval.csv") == eval_report_csv(expected));

  // out-of-range and malformed rows are rejected
  write_text_file((dir / "bad_scene.csv").string(), "scene,region,confidence\n99,0,0.5\n");
  CHECK(run_cli("eval --data_dir " + (dir / "data").string() + " --predictions " +
                    (dir / "bad_scene.csv").string() + " --out_dir " + (dir / "e2").string(),
                dir)
            .exit_code == 1);
  write_text_file((dir / "bad_row.csv").string(), "scene,region,confidence\n0,zero,0.5\n");
  CHECK(run_cli("eval --data_dir " + (dir / "data").string() + " --predictions " +
                    (dir / "bad_row.csv").string() + " --out_dir " + (dir / "e3").string(),
                dir)
            .exit_code == 1);
}

TEST_CASE("gradient check passes and a planted corruption fails loudly") {
  const fs::path dir = scratch("gradcheck");
  CliResult good = run_cli(
      "gradcheck --out_dir " + (dir / "good").string() + " --seed 5 --gradcheck.samples 2", dir);
  CHECK(good.exit_code == 0);
  const std::string report = slurp(dir / "good" / "gradcheck.txt");
  CHECK(report.find("PASS") != std::string::npos);
  CHECK(report.find("FAIL") == std::string::npos);
  CHECK(report.find("matcher.*") != std::string::npos);

  CliResult bad = run_cli("gradcheck --out_dir " + (dir / "bad").string() +
                              " --seed 5 --gradcheck.samples 2 --gradcheck.corrupt true",
                          dir);
  CHECK(bad.exit_code == 1);
  CHECK(slurp(dir / "bad" / "gradcheck.txt").find("FAIL") != std::string::npos);
  CHECK(bad.err.find("matcher") != std::string::npos);
  CHECK(read_manifest(dir / "bad")["success"] == false);
}

TEST_CASE("heatmaps carry the scene dimensions") {
  const fs::path dir = scratch("heatmap");
  REQUIRE(run_cli(synth_args(dir / "data", 19, 4), dir).exit_code == 0);
  REQUIRE(run_cli("train --data_dir " + (dir / "data").string() + " --out_dir " +
                      (dir / "run").string() + " --seed 19 --train.epochs 1 --train.batch_size 4",
                  dir)
              .exit_code == 0);

  const fs::path scene_path = dir / "data" / "scene_00002.scene";
  REQUIRE(run_cli("heatmap --checkpoint " + (dir / "run" / "model.ckpt").string() + " --scene " +
                      scene_path.string() + " --out_dir " + (dir / "maps").string(),
                  dir)
              .exit_code == 0);

  const Sample sample = load_sample(scene_path.string());
  const std::size_t n = sample.signifier_count(), m = sample.region_count();
  for (const char* stem : {"dissimilarity", "match_map", "assignment"}) {
    CAPTURE(stem);
    const std::string pgm = slurp(dir / "maps" / (std::string(stem) + ".pgm"));
    std::ostringstream header;
    header << "P2\n" << m << " " << n << "\n255\n";
    CHECK(pgm.rfind(header.str(), 0) == 0);
    CHECK(count_lines(slurp(dir / "maps" / (std::string(stem) + ".csv"))) == n);
  }

  // every quantized value fits the declared range
  std::istringstream body(slurp(dir / "maps" / "assignment.pgm"));
  std::string tok;
  body >> tok >> tok >> tok >> tok;  // magic, cols, rows, maxval
  int value = 0;
  while (body >> value) {
    CHECK(value >= 0);
    CHECK(value <= 255);
  }

  CHECK(run_cli("heatmap --scene " + scene_path.string(), dir).exit_code == 2);
  CHECK(run_cli("heatmap --checkpoint " + (dir / "run" / "model.ckpt").string(), dir).exit_code ==
        2);
}

TEST_CASE("flags override the configuration file which overrides defaults") {
  const fs::path dir = scratch("precedence");
  write_text_file((dir / "settings.cfg").string(),
                  "# generation settings\nseed = 3\nsynth.scene_count = 4\n"
                  "synth.points_min = 6\nsynth.points_max = 10\nsynth.background_points = 12\n");

  // config file alone
  REQUIRE(run_cli("synth --config " + (dir / "settings.cfg").string() + " --out_dir " +
                      (dir / "filed").string(),
                  dir)
              .exit_code == 0);
  // same settings spelled as flags
  REQUIRE(run_cli(synth_args(dir / "flagged", 3, 4), dir).exit_code == 0);
  CHECK(slurp(dir / "filed" / "scene_00000.scene") ==
        slurp(dir / "flagged" / "scene_00000.scene"));

  // a flag beats the file: seed 9 wins over the file's seed 3
  REQUIRE(run_cli("synth --config " + (dir / "settings.cfg").string() + " --seed 9 --out_dir " +
                      (dir / "mixed").string(),
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli(synth_args(dir / "nine", 9, 4), dir).exit_code == 0);
  CHECK(slurp(dir / "mixed" / "scene_00000.scene") == slurp(dir / "nine" / "scene_00000.scene"));
  CHECK(read_manifest(dir / "mixed")["config"]["seed"] == "9");

  // the environment variable names a config file when no flag does
  setenv("AFFMATCH_CONFIG", (dir / "settings.cfg").string().c_str(), 1);
  const int env_exit =
      run_cli("synth --out_dir " + (dir / "from_env").string(), dir).exit_code;
  unsetenv("AFFMATCH_CONFIG");
  REQUIRE(env_exit == 0);
  CHECK(slurp(dir / "from_env" / "scene_00000.scene") ==
        slurp(dir / "filed" / "scene_00000.scene"));

  // unknown keys and broken lines are configuration errors
  write_text_file((dir / "unknown.cfg").string(), "no_such_key = 1\n");
  CHECK(run_cli("synth --config " + (dir / "unknown.cfg").string(), dir).exit_code == 2);
  write_text_file((dir / "broken.cfg").string(), "just some words\n");
  CliResult broken = run_cli("synth --config " + (dir / "broken.cfg").string(), dir);
  CHECK(broken.exit_code == 2);
  CHECK(broken.err.find("line 1") != std::string::npos);
}

TEST_CASE("ablation tabulates the cumulative ladder in order") {
  const fs::path dir = scratch("ablate");
  REQUIRE(run_cli(synth_args(dir / "data", 23, 6), dir).exit_code == 0);
  CliResult r = run_cli("ablate --data_dir " + (dir / "data").string() + " --out_dir " +
                            (dir / "ab").string() +
                            " --seed 23 --train.epochs 1 --train.batch_size 4"
                            " --train.val_count 2",
                        dir);
  REQUIRE(r.exit_code == 0);

  std::istringstream csv(slurp(dir / "ab" / "ablation.csv"));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "label,map25,map50,map50_95");
  const std::vector<std::string> expected = {"align", "+dissim", "+embed", "+bidir"};
  for (const std::string& label : expected) {
    REQUIRE(std::getline(csv, line));
    CHECK(line.rfind(label + ",", 0) == 0);
  }
  CHECK_FALSE(std::getline(csv, line));

  // ablation without a validation split has nothing to score
  CHECK(run_cli("ablate --data_dir " + (dir / "data").string() + " --out_dir " +
                    (dir / "ab2").string() + " --train.epochs 1",
                dir)
            .exit_code == 2);
}

TEST_CASE("help text works and a subcommand is required") {
  const fs::path dir = scratch("help");
  CliResult help = run_cli("--help", dir);
  CHECK(help.exit_code == 0);
  for (const char* sub : {"synth", "train", "eval", "ablate", "gradcheck", "heatmap"})
    CHECK(help.out.find(sub) != std::string::npos);
  CHECK(run_cli("", dir).exit_code != 0);
  CHECK(run_cli("frobnicate", dir).exit_code != 0);
}
