#pragma once

// Curves over training epochs rendered as standalone SVG line charts, plus a
// JSON summary, from the files a training run leaves behind.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace ssr::report {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct ChartOptions {
  std::string title;
  std::string x_label = "epoch";
  std::string y_label;
  std::optional<double> y_min, y_max;  // data range when unset
  int width = 480;
  int height = 320;
};

/// Polylines with axes, ticks and a legend. Non-finite points are dropped.
std::string line_chart(const std::vector<Series>& series, const ChartOptions& opt);

/// Writes label_ratio.svg, pseudo_accuracy.svg, val_iou.svg and summary.json
/// into out_dir from run_dir/train_log.csv (required), pseudo_log.jsonl and
/// eval.csv (both optional). Returns the summary.
nlohmann::json write_report(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

}  // namespace ssr::report
