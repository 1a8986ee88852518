#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "affmatch/errors.hpp"
#include "affmatch/metrics.hpp"
#include "affmatch/tensor.hpp"

namespace affmatch {

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// One CSV row per tensor row, full precision so a re-read is bit-faithful.
inline std::string matrix_csv(const Tensor& t) {
  std::string out;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (j) out += ',';
      out += format_double(t.at(i, j));
    }
    out += '\n';
  }
  return out;
}

// Plain-text grayscale image. Values are clamped to [0,1] and quantized as
// round(255 * v).
inline std::string matrix_pgm(const Tensor& t) {
  std::string out = "P2\n" + std::to_string(t.cols()) + " " + std::to_string(t.rows()) + "\n255\n";
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      double v = t.at(i, j);
      if (v < 0.0) v = 0.0;
      if (v > 1.0) v = 1.0;
      if (j) out += ' ';
      out += std::to_string(static_cast<int>(std::lround(255.0 * v)));
    }
    out += '\n';
  }
  return out;
}

// Affine rescale onto [0,1] for unbounded score maps; a constant map renders
// as all-zero rather than dividing by zero.
inline Tensor min_max_normalize(const Tensor& t) {
  if (t.size() == 0) throw EmptyInputError("cannot normalize an empty matrix");
  double lo = t.data()[0], hi = t.data()[0];
  for (double v : t.data()) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  std::vector<double> values(t.size());
  if (hi > lo) {
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < t.size(); ++i) values[i] = (t.data()[i] - lo) * inv;
  }
  return Tensor::from(t.rows(), t.cols(), std::move(values));
}

inline std::string eval_report_csv(const EvalReport& report) {
  std::string out = "threshold,ap\n";
  for (const auto& [threshold, ap] : report.ap_per_threshold)
    out += format_double(threshold) + "," + format_double(ap) + "\n";
  out += "map_25," + format_double(report.map_25) + "\n";
  out += "map_50," + format_double(report.map_50) + "\n";
  out += "map_50_95," + format_double(report.map_50_95) + "\n";
  for (const auto& [action, ap] : report.per_action_50)
    out += "action_" + std::to_string(action) + "_ap50," + format_double(ap) + "\n";
  return out;
}

// Console summary matching the metric columns reported by the evaluator.
inline std::string eval_report_table(const EvalReport& report) {
  char buf[256];
  std::string out = "          mAP   mAP@0.25   mAP@0.50\n";
  std::snprintf(buf, sizeof(buf), "    %9.4f  %9.4f  %9.4f\n", report.map_50_95, report.map_25,
                report.map_50);
  out += buf;
  if (!report.per_action_50.empty()) {
    out += "per-action AP@0.50:\n";
    for (const auto& [action, ap] : report.per_action_50) {
      std::snprintf(buf, sizeof(buf), "    action %u: %.4f\n", action, ap);
      out += buf;
    }
  }
  return out;
}

// External prediction rows: scene index, region index, confidence.
struct PredictionRow {
  std::size_t scene = 0;
  std::size_t region = 0;
  double confidence = 0.0;
};

inline std::string predictions_csv(const std::vector<PredictionRow>& rows) {
  std::string out = "scene,region,confidence\n";
  for (const PredictionRow& r : rows)
    out += std::to_string(r.scene) + "," + std::to_string(r.region) + "," +
           format_double(r.confidence) + "\n";
  return out;
}

inline std::vector<PredictionRow> parse_predictions_csv(const std::string& text) {
  std::vector<PredictionRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("scene,", 0) == 0) continue;  // header
    PredictionRow row;
    char extra;
    if (std::sscanf(line.c_str(), "%zu,%zu,%lf%c", &row.scene, &row.region, &row.confidence,
                    &extra) != 3)
      throw IoError("malformed prediction row " + std::to_string(line_no) + ": " + line);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace affmatch
