#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <string>

#include "affmatch/export.hpp"

using namespace affmatch;

TEST_CASE("matrix CSV is full precision") {
  Tensor t = Tensor::from(2, 2, {1.0, 0.1, -3.5, 1.0 / 3.0});
  const std::string csv = matrix_csv(t);
  CHECK(csv == "1,0.10000000000000001\n-3.5,0.33333333333333331\n");
}

TEST_CASE("grayscale export quantizes with round(255 v)") {
  CHECK(matrix_pgm(Tensor::from(1, 1, {0.5})) == "P2\n1 1\n255\n128\n");
  CHECK(matrix_pgm(Tensor::from(1, 1, {0.0})) == "P2\n1 1\n255\n0\n");
  CHECK(matrix_pgm(Tensor::from(1, 1, {1.0})) == "P2\n1 1\n255\n255\n");
  CHECK(matrix_pgm(Tensor::from(1, 1, {2.0})) == "P2\n1 1\n255\n255\n");   // clamped
  CHECK(matrix_pgm(Tensor::from(1, 1, {-1.0})) == "P2\n1 1\n255\n0\n");    // clamped
  CHECK(matrix_pgm(Tensor::from(1, 3, {0.0, 0.25, 1.0})) == "P2\n3 1\n255\n0 64 255\n");
}

TEST_CASE("min-max rescale lands on the unit interval") {
  Tensor t = Tensor::from(2, 2, {-1.0, 0.0, 1.0, 3.0});
  Tensor n = min_max_normalize(t);
  CHECK(n.at(0, 0) == 0.0);
  CHECK(n.at(0, 1) == 0.25);
  CHECK(n.at(1, 0) == 0.5);
  CHECK(n.at(1, 1) == 1.0);
  Tensor flat = min_max_normalize(Tensor::filled(2, 2, 7.0));
  for (double v : flat.data()) CHECK(v == 0.0);
}

TEST_CASE("evaluation exports carry every metric") {
  EvalReport report;
  report.ap_per_threshold[0.25] = 1.0;
  report.ap_per_threshold[0.5] = 0.75;
  report.map_25 = 1.0;
  report.map_50 = 0.75;
  report.map_50_95 = 0.6;
  report.per_action_50[3] = 0.5;
  const std::string csv = eval_report_csv(report);
  CHECK(csv.find("threshold,ap\n") == 0);
  CHECK(csv.find("0.25,1\n") != std::string::npos);
  CHECK(csv.find("map_50,0.75\n") != std::string::npos);
  CHECK(csv.find("action_3_ap50,0.5\n") != std::string::npos);
  const std::string table = eval_report_table(report);
  CHECK(table.find("mAP@0.25") != std::string::npos);
  CHECK(table.find("mAP@0.50") != std::string::npos);
  CHECK(table.find("0.7500") != std::string::npos);
  CHECK(table.find("action 3") != std::string::npos);
}

TEST_CASE("prediction rows round-trip through CSV") {
  std::vector<PredictionRow> rows = {{0, 2, 0.5}, {1, 0, 0.125}};
  const std::string csv = predictions_csv(rows);
  auto parsed = parse_predictions_csv(csv);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].scene == 0);
  CHECK(parsed[0].region == 2);
  CHECK(parsed[0].confidence == 0.5);
  CHECK(parsed[1].scene == 1);
  CHECK(parsed[1].confidence == 0.125);
  CHECK_THROWS_AS(parse_predictions_csv("scene,region,confidence\n1,2\n"), IoError);
  CHECK_THROWS_AS(parse_predictions_csv("a,b,c\n"), IoError);
}

TEST_CASE("text files round-trip and report failures") {
  const std::string path = "export_roundtrip.txt";
  write_text_file(path, "hello\nworld\n");
  CHECK(read_text_file(path) == "hello\nworld\n");
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_text_file("no_such_file.txt"), IoError);
  CHECK_THROWS_AS(write_text_file("no_such_dir/out.txt", "x"), IoError);
}
